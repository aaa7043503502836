"""Build the optional Cython kernels; the package works without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("ACMG_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("acmg._kernels._core", ["src/acmg/_kernels/_core.pyx"])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
