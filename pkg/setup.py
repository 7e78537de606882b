"""Build the optional Cython kernels.

The package works without them: ``redactbench.kernels`` falls back to the
pure-Python/NumPy implementations when the extension cannot be imported.
Set ``REDACTBENCH_NO_EXT=1`` to skip compilation entirely.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("REDACTBENCH_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "redactbench._kernels",
                    ["src/redactbench/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
