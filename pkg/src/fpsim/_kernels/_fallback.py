"""Pure numpy implementations of the compiled kernels.

Each pass of the Walsh-Hadamard butterfly touches disjoint element pairs and
computes exactly ``a + b`` / ``a - b`` per pair, the same float64 expressions
as the compiled loop, so results are bit-identical across backends.
"""

from __future__ import annotations

import numpy as np


def fwht_inplace(x: np.ndarray) -> None:
    """Unnormalized fast Walsh-Hadamard transform, in place."""
    n = x.shape[0]
    h = 1
    while h < n:
        view = x.reshape(-1, 2 * h)
        left = view[:, :h].copy()
        right = view[:, h:].copy()
        view[:, :h] = left + right
        view[:, h:] = left - right
        h *= 2


def stochastic_round(x: np.ndarray, u: np.ndarray, out: np.ndarray) -> None:
    """Round each x[i] to floor(x[i]) + (u[i] < frac(x[i])), into out."""
    f = np.floor(x)
    np.add(f, (u < x - f).astype(np.float64), out=out)
