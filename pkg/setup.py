"""Build script for the optional compiled kernel extension.

The package is pure Python plus one Cython extension holding the hot
convolution/pooling loops.  The extension is marked optional: if no
compiler (or Cython) is available the install still succeeds and the
numpy fallback backend is used at import time.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "wordspot.nn._ckernels",
        ["src/wordspot/nn/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
]

if cythonize is not None:
    ext_modules = cythonize(extensions, language_level=3)
else:
    ext_modules = []

setup(ext_modules=ext_modules)
