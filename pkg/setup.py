import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "adaptdyn._kernels._ckernels",
        sources=["src/adaptdyn/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        # keep IEEE semantics identical to the pure-Python fallback
        extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
