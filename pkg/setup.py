"""Build script for the optional compiled DTW kernel.

The package is pure Python plus one Cython extension (`penlive._dtw_cy`)
covering the DTW inner loop. If Cython or a C compiler is unavailable the
extension is skipped and `penlive.dtw` falls back to the numpy kernel at
import time; everything still works, the 1NN baseline is just slower.

Build in place for development:

    python setup.py build_ext --inplace
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "penlive._dtw_cy",
                sources=["src/penlive/_dtw_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )
else:
    extensions = []

setup(ext_modules=extensions)
