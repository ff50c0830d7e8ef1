"""Kernel backend selection.

Imports the compiled extension when available, otherwise the numpy fallback.
Both produce bit-identical output; the compiled path is just faster.  Set
FPSIM_PURE_PYTHON=1 to force the fallback (used by tests and benchmarks).
"""

from __future__ import annotations

import os

if os.environ.get("FPSIM_PURE_PYTHON"):
    from fpsim._kernels import _fallback as _impl

    BACKEND = "numpy"
else:
    try:
        from fpsim._kernels import _fwht_cy as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from fpsim._kernels import _fallback as _impl  # type: ignore[no-redef]

        BACKEND = "numpy"

fwht_inplace = _impl.fwht_inplace
stochastic_round = _impl.stochastic_round

__all__ = ["BACKEND", "fwht_inplace", "stochastic_round"]
