"""Build script for the optional compiled matcher kernel.

The package is fully functional without the extension (a pure-Python
scanner is selected at import time), so a failed compile downgrades to
a warning instead of aborting the install.
"""

import sys

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    extensions = cythonize(
        [
            Extension(
                "termweave.matching._speedups",
                ["src/termweave/matching/_speedups.pyx"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"warning: compiled matcher kernel skipped ({exc}); "
          "falling back to the pure-Python scanner", file=sys.stderr)
    extensions = []

setup(ext_modules=extensions)
