"""Build hook for the optional compiled kernels.

The package is fully functional without the extension; ``curvesplit.kernels``
falls back to the pure-Python implementations at import time.  Set
``CURVESPLIT_NO_EXT=1`` to skip compilation entirely.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("CURVESPLIT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/curvesplit/_speedups.pyx"],
            language_level=3,
            compiler_directives={"boundscheck": False, "wraparound": False},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
