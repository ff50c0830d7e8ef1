"""Participation-aware zCDP accounting for tree-aggregated releases.

One client's influence on the released noise-free statistics is bounded by
the tree nodes its participations touch: if a client participates in rounds
P, the squared L2 sensitivity of the whole release (in units of the clip
norm) is sum over forest nodes v of |P intersect span(v)|^2, where the
forest contains every node of each segment's binary-counter trees.  The
accountant maximizes this quantity over all participation patterns allowed
by the scheduler's limits:

  max_part  - at most this many participations per client over the run,
  min_sep   - at least this many rounds between consecutive participations,

and converts it to rho-zCDP via rho = sensitivity^2 / (2 z^2) and on to
(epsilon, delta) via the optimal Gaussian-style conversion.

Two solvers compute the worst-case sensitivity: an exponential brute force
over patterns (the test oracle, capped at 24 rounds) and an exact dynamic
program over subtrees that shares tables across trees and scales to the
production-sized schedules this simulator models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fpsim.tree import RestartSchedule

__all__ = [
    "ParticipationSchema",
    "PrivacyLedger",
    "pattern_sensitivity_sq",
    "brute_force_sensitivity_sq",
    "worst_case_sensitivity_sq",
    "zcdp",
    "zcdp_to_eps",
    "zcdp_to_delta",
    "loose_eps",
    "sweep",
    "SWEEP_COLUMNS",
]

_NEG_INF = float("-inf")

BRUTE_FORCE_MAX_ROUNDS = 24


@dataclass(frozen=True)
class ParticipationSchema:
    """What the accountant needs to know about a finished or planned run."""

    total_rounds: int
    min_sep: int
    max_part: int
    restart_rounds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.total_rounds < 1:
            raise ValueError("total_rounds must be >= 1")
        if self.min_sep < 1:
            raise ValueError("min_sep must be >= 1")
        if self.max_part < 1:
            raise ValueError("max_part must be >= 1")
        # No client can participate more often than once per min_sep rounds,
        # so cap the declared budget at that ceiling.
        cap = -(-self.total_rounds // self.min_sep)
        object.__setattr__(self, "max_part", min(self.max_part, cap))
        # Normalizes/validates ordering; rounds >= total_rounds are legal in
        # a schedule object and simply never fire.
        schedule = RestartSchedule(self.restart_rounds)
        object.__setattr__(self, "restart_rounds", schedule.rounds)

    def segment_lengths(self) -> tuple[int, ...]:
        return RestartSchedule(self.restart_rounds).segment_lengths(self.total_rounds)

    def tree_levels(self) -> tuple[int, ...]:
        """Level (log2 size) of each complete tree, segments concatenated.

        A segment of n rounds instantiates one complete tree per set bit of
        n, largest first, exactly mirroring the noise mechanism.
        """
        levels = []
        for seg_len in self.segment_lengths():
            levels.extend(
                level for level in range(seg_len.bit_length() - 1, -1, -1) if seg_len >> level & 1
            )
        return tuple(levels)


def _forest_nodes(schema: ParticipationSchema) -> list[tuple[int, int]]:
    """All forest nodes as (start_round, end_round) half-open spans."""
    nodes = []
    offset = 0
    for k in schema.tree_levels():
        size = 1 << k
        for level in range(k + 1):
            width = 1 << level
            for index in range(size >> level):
                start = offset + index * width
                nodes.append((start, start + width))
        offset += size
    return nodes


def pattern_sensitivity_sq(schema: ParticipationSchema, rounds: tuple[int, ...]) -> float:
    """Sum over forest nodes of (participations inside the node's span)^2.

    ``rounds`` is one client's participation pattern; the value is in units
    of the squared clip norm.  Does not check min_sep/max_part.
    """
    pattern = np.asarray(sorted(rounds), dtype=np.int64)
    if pattern.size and not (0 <= pattern[0] and pattern[-1] < schema.total_rounds):
        raise ValueError("participation rounds must lie in [0, total_rounds)")
    if pattern.size != np.unique(pattern).size:
        raise ValueError("participation rounds must be distinct")
    total = 0.0
    for start, end in _forest_nodes(schema):
        count = int(np.searchsorted(pattern, end) - np.searchsorted(pattern, start))
        total += count * count
    return total


def brute_force_sensitivity_sq(
    total_rounds: int,
    min_sep: int,
    max_part: int,
    restart_rounds: tuple[int, ...] = (),
) -> float:
    """Exhaustive worst-case sensitivity; the oracle for the fast solver.

    Enumerates every pattern with gaps >= min_sep and size <= max_part by
    depth-first search, maintaining node counts incrementally.
    """
    if total_rounds > BRUTE_FORCE_MAX_ROUNDS:
        raise ValueError(
            f"brute force is exponential; total_rounds must be <= {BRUTE_FORCE_MAX_ROUNDS}"
        )
    schema = ParticipationSchema(total_rounds, min_sep, max_part, restart_rounds)
    nodes = _forest_nodes(schema)
    covering = [
        [i for i, (start, end) in enumerate(nodes) if start <= r < end]
        for r in range(total_rounds)
    ]
    counts = [0] * len(nodes)
    max_part = schema.max_part
    best = 0.0

    def visit(next_round: int, remaining: int, running: float) -> None:
        nonlocal best
        if running > best:
            best = running
        if remaining == 0:
            return
        for r in range(next_round, total_rounds):
            delta = 0
            for v in covering[r]:
                delta += 2 * counts[v] + 1
                counts[v] += 1
            visit(r + min_sep, remaining - 1, running + delta)
            for v in covering[r]:
                counts[v] -= 1

    visit(0, max_part, 0.0)
    return best


class _SensitivitySolver:
    """Exact worst-case sensitivity via dynamic programming over subtrees.

    For one complete tree of 2^k leaves, F[k][p][a, b] is the maximum of
    sum-of-squared node counts when placing exactly p participations in the
    tree's leaves with at least ``a`` empty leaves before the first one, at
    least ``b`` after the last one, and gaps >= min_sep.  The recursion
    splits at the root: either all p land in one half, or they split i /
    p - i with complementary margin requirements u and min_sep - 1 - u
    around the midline; the root itself always contributes p^2.

    Margins only matter up to min(min_sep, largest tree size + 1): beyond
    the tree size every margin is equally infeasible, so tables are clamped
    there.  The inner maximization over the midline margin u is a max-plus
    matrix product evaluated with numpy, which is what makes
    production-sized schedules (min_sep in the hundreds) fast.

    A forest (trees left to right, adjacent in time) is folded right to
    left: G[j][p][a] is the best total over trees j.. with p placements and
    left margin >= a, choosing per tree to skip it, fill it, or split with
    the same complementary-margin coupling across tree boundaries.
    """

    def __init__(self, min_sep: int, max_level: int) -> None:
        self.min_sep = min_sep
        self.max_level = max_level
        # Margin axis size for the per-tree tables.
        self.width = min(min_sep, (1 << max_level) + 1)
        self._tables: dict[tuple[int, int], np.ndarray] = {}

    def _table(self, k: int, p: int) -> np.ndarray:
        """F[k][p] over the (a, b) margin grid; built lazily, memoized."""
        assert p >= 1
        key = (k, p)
        cached = self._tables.get(key)
        if cached is not None:
            return cached
        width = self.width
        margins = np.arange(width)
        if p == 1:
            # One placement covered by its root path: k + 1 nodes of count 1.
            feasible = margins[:, None] + margins[None, :] <= (1 << k) - 1
            table = np.where(feasible, float(k + 1), _NEG_INF)
        elif (p - 1) * self.min_sep + 1 > (1 << k):
            table = np.full((width, width), _NEG_INF)
        else:
            half = 1 << (k - 1)
            shifted = np.maximum(margins - half, 0)
            prev_same = self._table(k - 1, p)
            # All p in the left half (right margin shrinks by the half
            # width) or all in the right half (left margin shrinks).
            best = np.maximum(prev_same[:, shifted], prev_same[shifted, :])
            u_count = min(self.min_sep, half)
            complement = np.minimum(
                np.maximum(self.min_sep - 1 - np.arange(u_count), 0), width - 1
            )
            for i in range(1, p):
                left = self._table(k - 1, i)[:, :u_count]
                right = self._table(k - 1, p - i)[complement, :]
                best = np.maximum(best, _maxplus(left, right))
            table = best + float(p * p)
        self._tables[key] = table
        return table

    def solve(self, tree_levels: tuple[int, ...], max_part: int, total_rounds: int) -> float:
        if max_part == 0 or not tree_levels:
            return 0.0
        if any(k > self.max_level for k in tree_levels):
            raise ValueError("tree exceeds this solver's max level")
        p_cap = min(max_part, 1 + (total_rounds - 1) // self.min_sep)
        g_width = self.min_sep
        g_margins = np.arange(g_width)
        # fold[p] = G[j][p] as a vector over the left-margin requirement.
        fold = [np.zeros(g_width)] + [np.full(g_width, _NEG_INF) for _ in range(p_cap)]
        for k in reversed(tree_levels):
            size = 1 << k
            skipped = np.maximum(g_margins - size, 0)
            clamped = np.minimum(g_margins, self.width - 1)
            u_count = min(self.min_sep, size)
            complement = np.minimum(
                np.maximum(self.min_sep - 1 - np.arange(u_count), 0), g_width - 1
            )
            new_fold = [np.zeros(g_width)]
            for p in range(1, p_cap + 1):
                best = fold[p][skipped]  # this tree left empty
                best = np.maximum(best, self._table(k, p)[clamped, 0])  # all p here
                for q in range(1, p):
                    here = self._table(k, q)[clamped, :u_count]
                    rest = fold[p - q][complement]
                    best = np.maximum(best, (here + rest[None, :]).max(axis=1))
                new_fold.append(best)
            fold = new_fold
        return float(max(vec[0] for vec in fold))


def _maxplus(left: np.ndarray, right: np.ndarray, cell_budget: int = 4_000_000) -> np.ndarray:
    """Max-plus matrix product max_u(left[a, u] + right[u, b]), chunked over
    u so the broadcast temporary stays within cell_budget cells."""
    rows, inner = left.shape
    cols = right.shape[1]
    step = max(1, cell_budget // max(1, rows * cols))
    out = np.full((rows, cols), _NEG_INF)
    for lo in range(0, inner, step):
        hi = min(inner, lo + step)
        block = (left[:, lo:hi, None] + right[None, lo:hi, :]).max(axis=1)
        np.maximum(out, block, out=out)
    return out


_SOLVER_CACHE: dict[tuple[int, int], _SensitivitySolver] = {}


def _solver_for(schema: ParticipationSchema) -> _SensitivitySolver:
    max_level = max(schema.tree_levels(), default=0)
    width = min(schema.min_sep, (1 << max_level) + 1)
    key = (schema.min_sep, width)
    solver = _SOLVER_CACHE.get(key)
    if solver is None or solver.max_level < max_level:
        solver = _SensitivitySolver(schema.min_sep, max_level)
        if len(_SOLVER_CACHE) > 32:
            _SOLVER_CACHE.clear()
        _SOLVER_CACHE[key] = solver
    return solver


def worst_case_sensitivity_sq(schema: ParticipationSchema) -> float:
    """Maximum squared sensitivity over all allowed participation patterns.

    Exact (agrees with brute_force_sensitivity_sq wherever that runs) and
    fast enough for multi-thousand-round schedules.
    """
    return _solver_for(schema).solve(
        schema.tree_levels(), schema.max_part, schema.total_rounds
    )


def zcdp(z: float, schema: ParticipationSchema) -> float:
    """rho-zCDP of the full tree release at noise multiplier z.

    The clip norm cancels: node noise has std z * clip, sensitivity is in
    clip units.  z = 0 means no noise: rho is infinite (non-private).
    """
    if z < 0:
        raise ValueError("z must be >= 0")
    if z == 0:
        return math.inf
    return worst_case_sensitivity_sq(schema) / (2.0 * z * z)


def zcdp_to_delta(rho: float, eps: float) -> float:
    """Tightest delta at a given epsilon for rho-zCDP.

        delta(eps) = inf_{alpha > 1} exp((alpha-1)(alpha rho - eps))
                     * (1 - 1/alpha)^alpha / (alpha - 1)

    minimized by golden-section search on the (convex) log of the
    objective.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if math.isinf(rho):
        return 1.0
    if rho == 0:
        return 0.0 if eps > 0 else 1.0

    def log_objective(alpha: float) -> float:
        return (
            (alpha - 1.0) * (alpha * rho - eps)
            + alpha * math.log1p(-1.0 / alpha)
            - math.log(alpha - 1.0)
        )

    lo = 1.0 + 1e-12
    hi = max(2.0, (eps + rho) / rho)
    while log_objective(hi * 2.0) < log_objective(hi) and hi < 1e15:
        hi *= 2.0
    hi *= 2.0
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = log_objective(c), log_objective(d)
    for _ in range(200):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = log_objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = log_objective(d)
    return min(1.0, math.exp(min(fc, fd)))


def zcdp_to_eps(rho: float, delta: float) -> float:
    """Smallest epsilon such that rho-zCDP implies (epsilon, delta)-DP,
    under the tight conversion (bisecting zcdp_to_delta in epsilon)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if rho < 0:
        raise ValueError("rho must be >= 0")
    if math.isinf(rho):
        return math.inf
    if rho == 0 or zcdp_to_delta(rho, 0.0) <= delta:
        return 0.0
    lo, hi = 0.0, loose_eps(rho, delta)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if zcdp_to_delta(rho, mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


def loose_eps(rho: float, delta: float) -> float:
    """Classical closed-form upper bound rho + 2 sqrt(rho ln(1/delta))."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if rho < 0:
        raise ValueError("rho must be >= 0")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


@dataclass
class PrivacyLedger:
    """Privacy position of one run: schema, equivalent noise multiplier,
    rho, and a cache of (delta -> epsilon) conversions.

    ``sensitivity_scale`` multiplies the per-participation sensitivity (in
    clip units); secure-aggregation runs pass inflated_clip / clip to
    account for the rounding inflation.
    """

    schema: ParticipationSchema
    z: float
    sensitivity_scale: float = 1.0
    rho: float = field(init=False)
    _eps_cache: dict[float, float] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.z < 0:
            raise ValueError("z must be >= 0")
        if not self.sensitivity_scale > 0:
            raise ValueError("sensitivity_scale must be > 0")
        self.rho = (
            math.inf
            if self.z == 0
            else zcdp(self.z, self.schema) * self.sensitivity_scale**2
        )

    @property
    def non_private(self) -> bool:
        return math.isinf(self.rho)

    def epsilon(self, delta: float) -> float:
        cached = self._eps_cache.get(delta)
        if cached is None:
            cached = zcdp_to_eps(self.rho, delta)
            self._eps_cache[delta] = cached
        return cached

    def loose_epsilon(self, delta: float) -> float:
        return math.inf if self.non_private else loose_eps(self.rho, delta)


SWEEP_COLUMNS = ("total_rounds", "report_goal", "z", "min_sep", "max_part", "rho")


def sweep(
    z: float,
    report_goal: int,
    population: int,
    total_rounds_range: tuple[int, ...],
    scaling: tuple[float, ...] = (1.0,),
) -> list[tuple[int, int, float, int, int, float]]:
    """Privacy-vs-schedule table over run lengths and report-goal scalings.

    For each run length and each scale factor f, the report goal and the
    noise multiplier are scaled together by f (larger cohorts can carry
    proportionally more noise at the same utility); min_sep is the best a
    timer can enforce at that cohort size, floor(population / report_goal),
    and max_part the worst case ceil(total_rounds / min_sep).  Rows are
    (total_rounds, report_goal, z, min_sep, max_part, rho), single-segment
    schedules.
    """
    if report_goal < 1:
        raise ValueError("report_goal must be >= 1")
    if population < report_goal:
        raise ValueError("population must be at least the report goal")
    if not z > 0:
        raise ValueError("z must be > 0")
    rows = []
    for total_rounds in total_rounds_range:
        for factor in scaling:
            if not factor > 0:
                raise ValueError("scale factors must be > 0")
            goal = int(round(report_goal * factor))
            if goal < 1 or goal > population:
                raise ValueError(
                    f"scaled report goal {goal} outside [1, population]"
                )
            scaled_z = z * factor
            min_sep = population // goal
            max_part = -(-total_rounds // min_sep)
            schema = ParticipationSchema(total_rounds, min_sep, max_part)
            rows.append(
                (total_rounds, goal, scaled_z, min_sep, max_part, zcdp(scaled_z, schema))
            )
    return rows
