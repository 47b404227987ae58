"""Build hook for the optional compiled QP kernel.

The package is fully functional without the extension: a pure-numpy
fallback with identical semantics is selected at import time.  The
compiled kernel only speeds up the projected-gradient inner loop of the
simplex-constrained QP solver, which dominates simulation runtime.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "unitavg._qp_kernel",
                ["src/unitavg/_qp_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"unitavg: building without the compiled kernel ({exc})\n")

setup(ext_modules=ext_modules)
