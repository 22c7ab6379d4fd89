"""Build hook for the optional compiled kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import); building it just makes the per-step hot path faster.
"""

import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "manikin._kernels",
                sources=["src/manikin/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
