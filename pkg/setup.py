"""Build script: compiles the optional graph-kernel extension.

The package works without the extension (a pure-Python twin of the kernel
is selected at import time); the compiled core only speeds up exhaustive
graph enumeration and d-separation sweeps.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/causalbias/_graphcore.pyx",
        compiler_directives={"language_level": "3"},
    )
except Exception:  # pragma: no cover - Cython missing: pure-Python fallback
    ext_modules = []

setup(ext_modules=ext_modules)
