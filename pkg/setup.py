import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "loadshift._kernel",
                ["src/loadshift/_kernel.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Without Cython the package still installs; the pure-Python kernel
    # is picked up at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
