"""Build script: compiles the optional C extension for the hot kernels.

The package works without the extension (a pure-Python fallback is selected
at import time), so any failure here just means slower kernels.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("kforge._kernels", ["src/kforge/_kernels.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
