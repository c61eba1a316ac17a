"""Build script for the optional compiled training kernel.

The extension is marked optional: if no C compiler is available the install
still succeeds and the package falls back to the pure-NumPy kernel at import.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "pbsent._sgns",
                ["src/pbsent/_sgns.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
