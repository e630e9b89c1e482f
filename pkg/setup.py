import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DPAGG_NO_EXTENSION"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dpagg._ringcore",
                ["src/dpagg/_ringcore.pyx"],
                include_dirs=["src/dpagg", np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
