# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: in-place fast Walsh-Hadamard butterflies and
stochastic rounding.

The butterfly schedule and per-element arithmetic are identical to the numpy
fallback, so both backends produce bit-identical float64 output.
"""

from libc.math cimport floor


def fwht_inplace(double[::1] x):
    """Unnormalized fast Walsh-Hadamard transform, in place.

    Length must be a power of two (checked by the caller).
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t h = 1
    cdef Py_ssize_t base, j
    cdef double a, b
    while h < n:
        base = 0
        while base < n:
            for j in range(base, base + h):
                a = x[j]
                b = x[j + h]
                x[j] = a + b
                x[j + h] = a - b
            base += 2 * h
        h *= 2


def stochastic_round(double[::1] x, double[::1] u, double[::1] out):
    """Round each x[i] to floor(x[i]) + (u[i] < frac(x[i])), into out.

    u must hold uniform [0, 1) draws.  Integer-valued inputs round to
    themselves for every u.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double f
    for i in range(n):
        f = floor(x[i])
        out[i] = f + (1.0 if u[i] < x[i] - f else 0.0)
