import os

from setuptools import setup

ext_modules = []
if os.environ.get("ROBUST_SCATTER_NO_EXT", "0") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "robust_scatter._core._speedups",
                    ["src/robust_scatter/_core/_speedups.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython/numpy at build time: install the pure-python lane only.
        ext_modules = []

setup(ext_modules=ext_modules)
