"""Build script: compiles the tracking-loop extension when Cython is available.

The package works without the extension (a pure-Python loop is selected at
import time), so the build is allowed to fall back to a source-only install.
"""
from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import numpy as np

    ext_modules = cythonize(
        [
            Extension(
                "blindcfo._tracking",
                ["src/blindcfo/_tracking.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
