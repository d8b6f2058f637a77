"""Build script: compiles the optional Cython kernel extension.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-Python kernels at import time.
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
                "mcnlearn._kernels._ckern",
                ["src/mcnlearn/_kernels/_ckern.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(
        f"mcnlearn: skipping Cython extension ({exc}); "
        "pure-Python kernels will be used\n"
    )

setup(ext_modules=ext_modules)
