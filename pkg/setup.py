"""Build the optional compiled min-plus kernels.

The package works without the extension (a pure-numpy fallback is selected
at import time); building it just makes Lax-Oleinik sweeps and kernel
powers several times faster.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "matherlab._kernels._minplus",
                ["src/matherlab/_kernels/_minplus.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
