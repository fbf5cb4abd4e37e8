"""Build the optional compiled kernels.

The package works without them: if Cython or a C compiler is missing, or the
build fails, installation continues and lagp falls back to numpy kernels.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Try OpenMP, then plain, then give up quietly."""

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
            return
        except Exception as exc:  # compiler or OpenMP unavailable
            print(f"lagp: OpenMP build of {ext.name} failed ({exc}); retrying without", file=sys.stderr)
        ext.extra_compile_args = [a for a in ext.extra_compile_args if "openmp" not in a]
        ext.extra_link_args = [a for a in ext.extra_link_args if "openmp" not in a]
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"lagp: skipping compiled kernels ({exc}); numpy fallback will be used", file=sys.stderr)


def extensions():
    if os.environ.get("LAGP_NO_EXTENSION"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("lagp: Cython not available; numpy fallback will be used", file=sys.stderr)
        return []
    ext = Extension(
        "lagp._kernels",
        ["src/lagp/_kernels.pyx"],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
    )
    return cythonize([ext], compiler_directives={"language_level": 3})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
