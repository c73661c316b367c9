"""Build script for the optional compiled convolution kernels.

The package works without the extension (a pure-numpy fallback is selected
at import time); building it just makes the per-element kernel path
available for benchmarking and small-shape workloads.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "hmode.kernels._convkern",
                ["src/hmode/kernels/_convkern.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
