import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "abmix._kernels",
        ["src/abmix/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # no fast-math / fp-contraction: the compiled kernels must reproduce
        # the pure-Python backend bit for bit
        extra_compile_args=["-O2", "-ffp-contract=off"],
    )
    ext_modules = cythonize([ext], language_level="3")

setup(ext_modules=ext_modules)
