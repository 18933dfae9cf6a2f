"""Build the optional compiled stepper core.

The extension is a plain Cython translation of sfkolmo/_core/fallback.py.
No fast-math or arch-specific flags: the compiled and pure-Python backends
must agree bitwise, so IEEE semantics are kept intact.
"""

from __future__ import annotations

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "sfkolmo._core._kernels",
        ["src/sfkolmo/_core/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
