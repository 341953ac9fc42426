"""Build hook for the compiled kernel extension.

The package is fully functional without the extension (a pure numpy fallback
is selected at import); compilation failures therefore degrade to a warning
instead of failing the install.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "vppres._kernels._core",
                ["src/vppres/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError as exc:  # pragma: no cover - build environment dependent
    print(f"warning: building without the compiled kernels ({exc})")

setup(ext_modules=ext_modules)
