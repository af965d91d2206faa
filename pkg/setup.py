import sys

import numpy as np
from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


class optional_build_ext(build_ext):
    """Build the C kernels if possible; fall back to pure python otherwise."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as e:
            print("WARNING: compiled kernels unavailable, using numpy fallback: %s" % e,
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as e:
            print("WARNING: failed to build %s, using numpy fallback: %s" % (ext.name, e),
                  file=sys.stderr)


ext = Extension(
    "pcgroup._kernels._ckern",
    sources=["src/pcgroup/_kernels/_ckern.pyx"],
    include_dirs=[np.get_include()],
    # no -ffast-math and no FMA contraction: the numpy fallback must produce
    # bit-identical float32 distances, which requires IEEE semantics here
    extra_compile_args=["-O3", "-march=native", "-mprefer-vector-width=512",
                        "-funroll-loops", "-ffp-contract=off", "-fopenmp"],
    extra_link_args=["-fopenmp"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

if cythonize is not None:
    extensions = cythonize([ext], language_level=3)
else:
    extensions = []

setup(ext_modules=extensions, cmdclass={"build_ext": optional_build_ext})
