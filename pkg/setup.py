"""Build script: compiles the optional Cython kernel core when possible.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any failure here degrades to a pure build
instead of aborting the install.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "owenexplain._kernels._compiled",
                ["src/owenexplain/_kernels/_compiled.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
