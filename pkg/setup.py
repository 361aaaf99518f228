"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed compile only costs speed, not functionality.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

ext = Extension(
    "carbonvol._core",
    ["src/carbonvol/_core.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    # no -ffast-math: kernel results must track the numpy fallback closely
    extra_compile_args=["-O3"],
)


class OptionalBuildExt(build_ext):
    """Skip the extension (with a warning) if no compiler is available."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing, not a user error
            print(f"WARNING: compiled kernels not built ({exc}); "
                  "falling back to pure-numpy backend")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: could not compile {ext.name} ({exc}); "
                  "falling back to pure-numpy backend")


setup(
    ext_modules=cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    ),
    cmdclass={"build_ext": OptionalBuildExt},
)
