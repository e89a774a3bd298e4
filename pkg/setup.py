"""Builds the optional compiled kernel extension.

The package works without it: kreply.backend falls back to the numpy
kernels when the extension is missing or fails to build.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "kreply._kernels",
                ["src/kreply/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError as exc:
    print(f"kreply: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
