"""Build script for the compiled pixel-kernel extension.

The package works without the extension: facade_pipeline.kernels falls back
to the numpy lane when facade_pipeline.kernels._native is absent.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "facade_pipeline.kernels._native",
                ["src/facade_pipeline/kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
