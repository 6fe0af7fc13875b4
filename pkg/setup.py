"""Build script.

The package is pure Python plus one optional Cython extension
(slrfr._pursuit_cy) that accelerates the greedy pursuit inner loop.
If the extension cannot be built (no compiler, no Cython) the install
still succeeds and the library falls back to the NumPy implementation.
Set SLRFR_SKIP_EXT=1 to skip the extension on purpose.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class _OptionalBuildExt(build_ext):
    """build_ext that downgrades compile failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - depends on toolchain
            print(f"warning: skipping optional extension build: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - depends on toolchain
            print(f"warning: could not build {ext.name}: {exc}")


def _extensions():
    if os.environ.get("SLRFR_SKIP_EXT") == "1":
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # pragma: no cover - build environment without Cython
        return []
    ext = Extension(
        "slrfr._pursuit_cy",
        ["src/slrfr/_pursuit_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": _OptionalBuildExt},
)
