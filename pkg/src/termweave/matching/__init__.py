"""Backend selection for the term-matching kernel.

The compiled scanner is preferred when its extension module imported
cleanly; setting ``TERMWEAVE_PURE=1`` in the environment forces the
pure-Python implementation (useful for debugging and benchmarking).
Both implementations satisfy the same contract and are held equivalent
by the oracle property tests.
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("TERMWEAVE_PURE") == "1":
    _impl = _pure
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

TermScanner = _impl.TermScanner
PureTermScanner = _pure.TermScanner


def backend_name() -> str:
    """'compiled' when the Cython kernel is active, else 'pure'."""
    return "pure" if _impl is _pure else "compiled"


def available_backends() -> dict[str, type]:
    """Importable scanner implementations keyed by name."""
    backends: dict[str, type] = {"pure": _pure.TermScanner}
    try:
        from . import _speedups
        backends["compiled"] = _speedups.TermScanner
    except ImportError:
        pass
    return backends
