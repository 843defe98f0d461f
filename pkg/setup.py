"""Build script for the optional compiled kernels.

The Cython extension is optional: when Cython or a C compiler is missing the
package installs as pure Python and ``betagas.kernels`` falls back to the
NumPy implementation.
"""
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "betagas._kernels",
                ["src/betagas/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )
except ImportError:  # pragma: no cover - exercised only without Cython
    pass

setup(ext_modules=ext_modules)
