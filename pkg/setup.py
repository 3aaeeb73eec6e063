import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; eahawkes falls back to _pykernels
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "eahawkes._kernels",
                ["src/eahawkes/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
