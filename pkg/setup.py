"""Build script for the optional compiled kernel extension.

The package is pure Python except for ``orbitgauge._kernels``, a Cython
module holding the hot per-step loops of the stochastic training dynamics.
If Cython or a C compiler is unavailable the build falls back to the pure
Python driver; everything still works, just slower.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "orbitgauge._kernels",
                ["src/orbitgauge/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    import sys

    print(f"orbitgauge: skipping compiled kernels ({exc!r})", file=sys.stderr)

setup(ext_modules=ext_modules)
