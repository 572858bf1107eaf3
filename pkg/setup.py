import os

import numpy as np
from setuptools import Extension, setup

# fp-contract off keeps the compiled kernels bit-identical to the pure-Python path
COMPILE_ARGS = ["-O2", "-ffp-contract=off", "-fno-fast-math"]


def extensions():
    if os.environ.get("RWDE_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "rwde._kernels",
        ["src/rwde/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=COMPILE_ARGS,
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
