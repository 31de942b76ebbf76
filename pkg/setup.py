"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile should not block installation: run
``CBATTACK_SKIP_EXT=1 pip install .`` to skip it explicitly.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("CBATTACK_SKIP_EXT"):
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cbattack.kernels._native",
                sources=["src/cbattack/kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
