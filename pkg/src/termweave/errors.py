"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation problems exit 1,
transport/provider problems exit 2.
"""


class TermweaveError(Exception):
    """Base class for all toolkit errors."""


class LoadError(TermweaveError):
    """A file could not be parsed (malformed row, bad encoding, ...)."""


class ValidationError(TermweaveError):
    """Input parsed but violates an invariant."""


class ConfigurationError(TermweaveError):
    """A backend or manifest is misconfigured (raised before any I/O)."""


class TransportError(TermweaveError):
    """Network-level failure after retries were exhausted."""


class ProviderError(TermweaveError):
    """The translation provider answered with a non-success response."""


class DegenerateInputError(TermweaveError):
    """A statistic is undefined for the given input (e.g. all-zero diffs)."""
