"""Build hook for the optional compiled core.

If Cython or a C compiler is unavailable the package installs without the
extension and falls back to the pure-Python kernels at import.
"""
import os

from setuptools import setup


def _extensions():
    if os.environ.get("SURVBLEND_NO_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "survblend._ckernels",
        ["src/survblend/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        libraries=["m"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"}, quiet=True)


setup(ext_modules=_extensions())
