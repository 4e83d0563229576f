"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a pure-Python
kernel module is selected at import time), so a failed compile only
costs speed.
"""

import sys

from setuptools import Extension, setup


def extensions():
    try:
        from Cython.Build import cythonize
        import numpy
    except ImportError:
        return []
    ext = Extension(
        "gridspectra._ckernels",
        ["src/gridspectra/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


try:
    setup(ext_modules=extensions())
except SystemExit:
    raise
except Exception as exc:  # compiler missing, bad toolchain, ...
    sys.stderr.write(f"warning: building without compiled kernels ({exc})\n")
    setup(ext_modules=[])
