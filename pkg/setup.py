"""Build shim for the optional compiled chain kernel.

The package works without the extension: ``ccslab._kernels`` falls back to a
NumPy implementation at import time.  The extension only accelerates batched
sampling, so a failed build should degrade, not abort, the install.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "ccslab._kernels._chainkern",
                ["src/ccslab/_kernels/_chainkern.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
