"""The federated training round loop.

Each round the server selects a cohort of exactly ``report_goal`` clients
among those whose re-participation timer has expired, runs local SGD on
each, aggregates the clipped updates (plainly or through the secure
aggregation pipeline), feeds the un-normalized sum to the noise tree, and
applies the anchored momentum update

    momentum <- beta * momentum + (noised cumulative sum) / report_goal
    theta    <- theta0 + eta_s * momentum

which keeps the model a deterministic function of the released cumulative
sums (theta0 is the fixed anchor; restarts do not move it).  Timers make
participation limits structural: a timer of w rounds enforces a minimum
separation of w between any client's participations, which is what the
privacy accountant consumes post hoc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fpsim.clipping import ClipState
from fpsim.models import SoftmaxRegression
from fpsim.secagg import (
    SecAggConfig,
    bits_per_update,
    decode,
    encode_client,
    modular_sum,
)
from fpsim.seeds import SeedPath, sign_vector
from fpsim.tree import RestartSchedule, TreeState
from fpsim.vectors import as_param_vector, clip_l2, randomized_hadamard

__all__ = [
    "AvailabilityModel",
    "CohortConfig",
    "ClientRecord",
    "ServerState",
    "RoundMetrics",
    "CohortExhausted",
    "TrainingDiverged",
    "client_update",
    "select_cohort",
    "run_round",
    "observed_limits",
]


class CohortExhausted(RuntimeError):
    """Fewer eligible clients than the report goal requires."""


class TrainingDiverged(RuntimeError):
    """Training loss or parameters became non-finite."""


@dataclass(frozen=True)
class AvailabilityModel:
    """Client availability weighting: uniform, or a sinusoidal day/night
    cycle where each client's phase is a fixed hash of its id."""

    kind: str = "uniform"
    period: float = 24.0
    amplitude: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "diurnal"):
            raise ValueError("availability kind must be 'uniform' or 'diurnal'")
        if self.kind == "diurnal":
            if not self.period > 0:
                raise ValueError("diurnal period must be > 0")
            if not 0.0 <= self.amplitude <= 1.0:
                raise ValueError("diurnal amplitude must be in [0, 1]")

    def weights(self, client_ids: np.ndarray, round_index: int) -> np.ndarray:
        if self.kind == "uniform":
            return np.ones(client_ids.shape[0], dtype=np.float64)
        # Golden-ratio hash spreads phases evenly and is independent of any
        # run seed: availability is a property of the world, not the run.
        phases = (client_ids.astype(np.uint64) * np.uint64(2654435761) % np.uint64(2**32)) / 2.0**32
        cycle = 2.0 * math.pi * (round_index / self.period + phases)
        return 1.0 + self.amplitude * np.sin(cycle)


@dataclass(frozen=True)
class CohortConfig:
    """Population-side selection parameters."""

    population: int
    report_goal: int
    timer_rounds: int
    availability: AvailabilityModel = AvailabilityModel()

    def __post_init__(self) -> None:
        if self.report_goal < 1:
            raise ValueError("report_goal must be >= 1")
        if self.population < self.report_goal:
            raise ValueError("population must be >= report_goal")
        if self.timer_rounds < 1:
            raise ValueError("timer_rounds must be >= 1")


@dataclass
class ClientRecord:
    """One simulated device: its data, its timer, and its history."""

    id: int
    dataset: object
    next_eligible_round: int = 0
    participation_rounds: list[int] = field(default_factory=list)


def client_update(
    model: SoftmaxRegression,
    params: np.ndarray,
    dataset,
    eta_c: float,
    clip_active: float,
    clip_quantile: float,
    batch_size: int = 16,
    epochs: int = 1,
    order_seed: SeedPath | None = None,
) -> tuple[np.ndarray, int, float]:
    """Local SGD from the current model; returns the clipped delta, the
    below-quantile indicator, and the mean minibatch loss.

    The indicator compares the *unclipped* delta norm against
    clip_quantile (the server's current estimate); clipping itself uses
    clip_active.  Batch order is shuffled per epoch from order_seed; pass
    None for sequential order.
    """
    if len(dataset) == 0:
        raise ValueError("client dataset is empty")
    if not eta_c > 0:
        raise ValueError("eta_c must be > 0")
    if batch_size < 1 or epochs < 1:
        raise ValueError("batch_size and epochs must be >= 1")
    params = as_param_vector(params)
    local = params.copy()
    rng = order_seed.generator() if order_seed is not None else None
    n = len(dataset)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            loss, grad = model.loss_grad(local, dataset.contexts[batch], dataset.labels[batch])
            local -= eta_c * grad
            losses.append(loss)
    delta = local - params
    indicator = 1 if float(np.linalg.norm(delta)) <= clip_quantile else 0
    return clip_l2(delta, clip_active), indicator, float(np.mean(losses))


def select_cohort(
    clients: list[ClientRecord], cfg: CohortConfig, round_index: int, seed: SeedPath
) -> list[int]:
    """Draw exactly report_goal eligible clients and start their timers.

    Eligible means the timer has expired and the dataset is nonempty
    (empty-data clients can never contribute, so they are replaced at
    selection time).  Sampling is uniform, or availability-weighted via
    exponential-race keys, and deterministic in (seed, round).  Returns the
    selected ids in ascending order, the canonical aggregation order.
    """
    if round_index < 0:
        raise ValueError("round_index must be >= 0")
    eligible = [
        rec
        for rec in clients
        if rec.next_eligible_round <= round_index and len(rec.dataset) > 0
    ]
    if len(eligible) < cfg.report_goal:
        raise CohortExhausted("population exhausted: raise timer or population")
    ids = np.array([rec.id for rec in eligible], dtype=np.int64)
    weights = np.maximum(cfg.availability.weights(ids, round_index), 1e-12)
    rng = seed.child("cohort", round_index).generator()
    # Weighted sampling without replacement: top-m exponential-race keys
    # (with uniform weights this reduces to a uniform m-subset).
    keys = np.log(rng.random(ids.shape[0])) / weights
    chosen = np.argpartition(keys, -cfg.report_goal)[-cfg.report_goal :]
    selected = sorted(int(ids[i]) for i in chosen)
    by_id = {rec.id: rec for rec in eligible}
    for client_id in selected:
        rec = by_id[client_id]
        rec.next_eligible_round = round_index + cfg.timer_rounds
        rec.participation_rounds.append(round_index)
    return selected


@dataclass
class ServerState:
    """Mutable training-loop state (Algorithm state plus run knobs)."""

    model: SoftmaxRegression
    theta0: np.ndarray
    eta_s: float
    beta: float
    report_goal: int
    delta_tree: TreeState
    clip: ClipState | None
    fixed_clip: float
    restart_schedule: RestartSchedule
    seed: SeedPath
    eta_c: float = 0.1
    batch_size: int = 16
    epochs: int = 1
    secagg: SecAggConfig | None = None
    round: int = 0
    theta: np.ndarray = field(default=None)  # type: ignore[assignment]
    momentum: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.theta0 = as_param_vector(self.theta0, self.model.num_params)
        if self.theta is None:
            self.theta = self.theta0.copy()
        if self.momentum is None:
            self.momentum = np.zeros_like(self.theta0)
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must be in [0, 1)")
        if not self.eta_s > 0:
            raise ValueError("eta_s must be > 0")
        if self.report_goal < 1:
            raise ValueError("report_goal must be >= 1")
        if self.secagg is not None and self.clip is not None:
            raise ValueError("secure aggregation requires a fixed clip norm")
        if self.secagg is not None and self.secagg.cohort_size != self.report_goal:
            raise ValueError("secagg cohort_size must equal report_goal")

    @property
    def active_clip(self) -> float:
        return self.clip.active if self.clip is not None else self.fixed_clip

    @property
    def quantile_estimate(self) -> float:
        return self.clip.estimate if self.clip is not None else self.fixed_clip


@dataclass(frozen=True)
class RoundMetrics:
    """Per-round scalars the harness logs."""

    round: int
    train_loss: float
    cohort_size: int
    active_clip: float
    quantile_estimate: float
    bits_per_update: int = 0
    secagg_residual: float = 0.0
    secagg_clamp_fraction: float = 0.0


def run_round(server: ServerState, cohort: list[ClientRecord]) -> RoundMetrics:
    """Advance one round: local updates, aggregation, tree noise, anchored
    momentum step, clip-estimate update, and scheduled restarts."""
    if len(cohort) != server.report_goal:
        raise ValueError("cohort size must equal the report goal")
    t = server.round
    active = server.active_clip
    quantile = server.clip.estimate if server.clip is not None else math.inf

    deltas = []
    indicator_sum = 0
    loss_sum = 0.0
    for rec in cohort:
        delta, indicator, loss = client_update(
            server.model,
            server.theta,
            rec.dataset,
            server.eta_c,
            active,
            quantile,
            server.batch_size,
            server.epochs,
            server.seed.child("local-order", t).child("client", rec.id),
        )
        deltas.append(delta)
        indicator_sum += indicator
        loss_sum += loss

    plain_sum = np.sum(deltas, axis=0)
    bits = 0
    residual = 0.0
    clamp_fraction = 0.0
    if server.secagg is not None:
        cfg = server.secagg
        signs = sign_vector(server.seed.child("rotation", t), cfg.padded_dim)
        encoded = []
        clamped = 0
        for rec, delta in zip(cohort, deltas):
            encoded.append(
                encode_client(
                    delta, cfg, signs, server.seed.child("rounding", t).child("client", rec.id)
                )
            )
            padded = np.zeros(cfg.padded_dim)
            padded[: delta.shape[0]] = clip_l2(delta * cfg.scale, cfg.scale * cfg.clip_norm)
            rotated = randomized_hadamard(padded, signs)
            clamped += int(np.count_nonzero(np.abs(rotated) > cfg.infinity_bound))
        total = modular_sum(encoded, cfg.modulus)
        round_sum = decode(total, cfg, signs, len(cohort), server.model.num_params)
        bits = bits_per_update(cfg)
        residual = float(np.linalg.norm(round_sum - plain_sum))
        clamp_fraction = clamped / (len(cohort) * cfg.padded_dim)
    else:
        round_sum = plain_sum

    noised_cumulative = server.delta_tree.add_round(round_sum)
    server.momentum = server.beta * server.momentum + noised_cumulative / server.report_goal
    server.theta = server.theta0 + server.eta_s * server.momentum

    if server.clip is not None:
        server.clip.add_round(float(indicator_sum))

    train_loss = loss_sum / len(cohort)
    if not math.isfinite(train_loss) or not np.isfinite(server.theta).all():
        raise TrainingDiverged(f"non-finite loss or parameters at round {t}")

    server.round = t + 1
    if server.round in server.restart_schedule.rounds:
        new_clip = server.clip.restart() if server.clip is not None else server.fixed_clip
        server.delta_tree.restart(new_clip)

    return RoundMetrics(
        round=t,
        train_loss=train_loss,
        cohort_size=len(cohort),
        active_clip=active,
        quantile_estimate=server.quantile_estimate,
        bits_per_update=bits,
        secagg_residual=residual,
        secagg_clamp_fraction=clamp_fraction,
    )


def observed_limits(clients: list[ClientRecord], total_rounds: int) -> tuple[int, int]:
    """Post-hoc participation statistics for the accountant.

    Returns (max participations of any client, minimum gap between any
    client's consecutive participations).  When no client participated
    twice the separation is unconstrained and reported as total_rounds by
    convention.
    """
    if total_rounds < 1:
        raise ValueError("total_rounds must be >= 1")
    max_part = 0
    min_sep = total_rounds
    for rec in clients:
        rounds = rec.participation_rounds
        max_part = max(max_part, len(rounds))
        for a, b in zip(rounds, rounds[1:]):
            min_sep = min(min_sep, b - a)
    return max_part, min_sep
