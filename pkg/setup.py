"""Builds the optional compiled kernel; the package works without it.

The extension is compiled with OpenMP when the compiler supports it, without
it otherwise; if compilation fails altogether the install continues and the
numpy kernels are used. Set ``BLOCKSOLVE_NO_EXT=1`` to skip the extension.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext

OPENMP = [] if sys.platform == "darwin" else ["-fopenmp"]


class OptionalBuildExt(build_ext):
    def build_extension(self, ext):
        try:
            super().build_extension(ext)
            return
        except Exception as exc:  # noqa: BLE001 - any compiler failure
            if not OPENMP:
                self._skip(ext, exc)
                return
            print(f"building {ext.name} with OpenMP failed ({exc}); retrying without it")
        ext.extra_compile_args = [a for a in ext.extra_compile_args if a not in OPENMP]
        ext.extra_link_args = [a for a in ext.extra_link_args if a not in OPENMP]
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._skip(ext, exc)

    @staticmethod
    def _skip(ext, exc):
        print(f"skipping {ext.name} ({exc}); the numpy kernels will be used")


ext_modules = []
if not os.environ.get("BLOCKSOLVE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("blocksolve._kernels", ["src/blocksolve/_kernels.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"] + OPENMP,
                       extra_link_args=OPENMP)],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
