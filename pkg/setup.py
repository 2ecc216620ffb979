import os

import numpy as np
from setuptools import Extension, setup

# CHROMABIN_NO_EXT=1 installs the pure-Python package only.
ext_modules = []
if not os.environ.get("CHROMABIN_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "chromabin._kernels",
                ["src/chromabin/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
