"""Build script with an optional compiled kernel extension.

The package is fully functional without the extension: fpsim._kernels falls
back to a numpy implementation that produces bit-identical results.  The
extension is skipped (with a warning) when Cython or a C compiler is missing.
"""

import warnings

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "fpsim._kernels._fwht_cy",
                sources=["src/fpsim/_kernels/_fwht_cy.pyx"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - environment-dependent
    warnings.warn(f"building without compiled kernels: {exc}")

setup(ext_modules=ext_modules)
