"""Build script: compiles the fast score-network kernels when a toolchain
is available, otherwise installs the pure-NumPy package unchanged."""

import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/fplid/_mlp_cy.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    print("fplid: Cython not available, installing without compiled kernels", file=sys.stderr)

setup(ext_modules=ext_modules)
