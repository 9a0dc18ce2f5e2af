"""Builds the optional compiled scoring kernels.

The package is fully functional without the extension: when the compiled
module is absent, ``crosstask._kernels`` falls back to the numpy
implementations with identical semantics. Set ``CROSSTASK_NO_EXT=1`` to
skip compilation entirely.
"""
import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("CROSSTASK_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "crosstask._kernels._cykernels",
        ["src/crosstask/_kernels/_cykernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(ext, language_level=3)


setup(ext_modules=_extensions())
