"""Build script for the compiled Hausdorff kernel.

The extension is optional: if Cython or a C compiler is unavailable the
package installs anyway and ctxseg.kernels falls back to the pure-numpy
implementation at import time.
"""
from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ctxseg.kernels._hausdorff",
                ["src/ctxseg/kernels/_hausdorff.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
