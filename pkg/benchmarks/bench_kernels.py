"""Benchmark the compiled kernels against the pure-numpy fallback.

Both backends produce bit-identical results (asserted below); this script
measures what the compiled path buys in speed. Run from the repo root:

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --sizes 4096 262144 --repeats 50
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fpsim._kernels import _fallback

try:
    from fpsim._kernels import _fwht_cy as _compiled
except ImportError:
    _compiled = None


def _time_per_call(fn, repeats: int) -> float:
    """Best-of-three wall time per call, in microseconds."""
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - start) / repeats)
    return best * 1e6


def bench_fwht(size: int, repeats: int) -> dict[str, float]:
    rng = np.random.default_rng(0)
    base = rng.normal(size=size)
    results = {"copy only": _time_per_call(base.copy, repeats)}
    for name, impl in _backends():
        def call(impl=impl):
            x = base.copy()
            impl.fwht_inplace(x)
        results[name] = _time_per_call(call, repeats)
    return results


def bench_round(size: int, repeats: int) -> dict[str, float]:
    rng = np.random.default_rng(1)
    x = rng.normal(size=size) * 100
    u = rng.uniform(size=size)
    out = np.empty(size)
    results = {}
    for name, impl in _backends():
        results[name] = _time_per_call(lambda impl=impl: impl.stochastic_round(x, u, out), repeats)
    return results


def _backends():
    yield "numpy", _fallback
    if _compiled is not None:
        yield "compiled", _compiled


def _check_equivalence(size: int) -> None:
    if _compiled is None:
        return
    rng = np.random.default_rng(2)
    x = rng.normal(size=size)
    a, b = x.copy(), x.copy()
    _fallback.fwht_inplace(a)
    _compiled.fwht_inplace(b)
    assert np.array_equal(a, b), "backends disagree on fwht"
    u = rng.uniform(size=size)
    out_a, out_b = np.empty(size), np.empty(size)
    _fallback.stochastic_round(x * 100, u, out_a)
    _compiled.stochastic_round(x * 100, u, out_b)
    assert np.array_equal(out_a, out_b), "backends disagree on stochastic_round"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--sizes", type=int, nargs="+", default=[1024, 8192, 65536, 524288],
        help="vector lengths to benchmark (powers of two)",
    )
    parser.add_argument("--repeats", type=int, default=100, help="calls per timing loop")
    args = parser.parse_args()

    if _compiled is None:
        print("compiled extension not available - timing the numpy fallback only\n")
    else:
        _check_equivalence(max(args.sizes))
        print("backends verified bit-identical\n")

    for label, bench in (("fwht_inplace", bench_fwht), ("stochastic_round", bench_round)):
        print(f"{label} (microseconds per call, best of 3)")
        header = f"  {'size':>8}"
        rows = []
        for size in args.sizes:
            result = bench(size, args.repeats)
            rows.append((size, result))
        names = list(rows[0][1])
        print(header + "".join(f"{name:>14}" for name in names) + f"{'speedup':>10}")
        for size, result in rows:
            cells = "".join(f"{result[name]:>14.1f}" for name in names)
            if "compiled" in result and result["compiled"] > 0:
                speedup = f"{result['numpy'] / result['compiled']:>9.1f}x"
            else:
                speedup = f"{'-':>10}"
            print(f"  {size:>8}{cells}{speedup}")
        print()


if __name__ == "__main__":
    main()
