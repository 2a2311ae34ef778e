"""Build the optional compiled kernels.

The Cython extension is optional: if it cannot be compiled the package
installs anyway and falls back to the numpy kernels at import time.
"""
import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"WARNING: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"WARNING: failed to build {ext.name} ({exc}); using numpy fallback")


try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "tdelm._kernels",
                ["src/tdelm/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:  # pragma: no cover
    extensions = []

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
