"""Build script: compiles the optional fast kernel extension when Cython is available.

A plain `pip install .` without Cython (or without a C compiler) still produces a
fully working package; the numpy kernel backend is selected at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "xmodal.kernels._fast",
                ["src/xmodal/kernels/_fast.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
