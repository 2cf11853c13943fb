"""Build the optional Cython kernels.

The package works without them: ``hgtpp.kernels`` falls back to numpy when
the extension is missing.  Build in place with::

    python3 setup.py build_ext --inplace
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("HGTPP_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "hgtpp._ckernels",
                    sources=["src/hgtpp/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
