import os

from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The package works without the compiled kernel (a numpy fallback is selected
# at import time), so a missing Cython toolchain must not break installation.
extensions = []
if cythonize is not None and os.environ.get("PIVGEN_SKIP_NATIVE") != "1":
    extensions = cythonize(
        [
            Extension(
                "pivgen._native",
                ["src/pivgen/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=extensions)
