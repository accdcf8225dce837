import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SHCSP_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # the pure-Python kernel is used instead
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            "shcsp._kernel",
            ["src/shcsp/_kernel.pyx"],
            # no fused multiply-add: the compiled and Python kernels must round alike
            extra_compile_args=["-O2", "-ffp-contract=off"],
        )
        ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
