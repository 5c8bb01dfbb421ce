"""Build script: compiles the optional hot-kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so the extension is marked optional and any
compilation failure downgrades to the pure-Python path instead of failing
the install. Set SUBDEQ_SKIP_EXT=1 to skip the compile step entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SUBDEQ_SKIP_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext = Extension(
            "subdeq._kernels._fast",
            ["src/subdeq/_kernels/_fast.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
            optional=True,
        )
        ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
        for mod in ext_modules:
            mod.optional = True
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
