# Builds the optional compiled kernel core. The package works without it:
# quadricfit._kernels falls back to the vectorized numpy implementation when
# the extension is absent (see src/quadricfit/_kernels/__init__.py).
#
#   python setup.py build_ext --inplace

import numpy
from setuptools import setup
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "quadricfit._kernels._core",
                ["src/quadricfit/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
