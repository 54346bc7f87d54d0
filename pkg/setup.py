import os

from setuptools import Extension, setup


def ext_modules():
    # The compiled core is optional: without Cython (or with
    # DAGCACHESIM_NO_EXT set) the package installs pure-Python only and
    # selects the fallback backend at import.
    if os.environ.get("DAGCACHESIM_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "dagcachesim._core._speedups",
        sources=["src/dagcachesim/_core/_speedups.pyx"],
        extra_compile_args=["-O2"],
    )
    return cythonize(ext, language_level=3)


setup(ext_modules=ext_modules())
