"""Build script: compiles the optional Cython path-generation kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile downgrades to a warning instead of
aborting the install.
"""

import sys

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover
            print(f"WARNING: building the Cython kernel failed ({exc}); "
                  "falling back to the pure-numpy backend", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            print(f"WARNING: {ext.name} failed to compile ({exc}); "
                  "falling back to the pure-numpy backend", file=sys.stderr)


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover
        return []
    return cythonize(
        [
            Extension(
                "ccemfg._pathgen_cy",
                ["src/ccemfg/_pathgen_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
