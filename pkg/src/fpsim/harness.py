"""Experiment orchestration: full runs, privacy sweeps, run comparison.

A run writes a self-describing directory:

    metrics.csv        one row per round (schema below)
    checkpoint.bin     final parameters ("FPSIM1" magic, little-endian)
    participation.csv  (client_id, round) pairs, the post-hoc privacy log
    report.csv         machine-readable privacy report (one row)
    report.txt         the same report for humans, with caveats
    config.resolved    canonical config text whose hash names the run
    secagg.csv         per-round pipeline diagnostics (SecAgg runs only)

Everything is a pure function of the config (including its seed): running
the same config twice produces byte-identical metrics and checkpoints.
The privacy report is computed from the observed participation log
(tighter than the schedule's worst case) and is internally consistent:
re-running the accountant on the logged limits reproduces the reported
rho exactly.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fpsim import accounting
from fpsim.accounting import ParticipationSchema, PrivacyLedger
from fpsim.clipping import ClipState, combined_multiplier, noise_split
from fpsim.config import ExperimentConfig, SweepConfig
from fpsim.data import DataConfig, synthesize_clients, synthesize_eval_set
from fpsim.federation import (
    ClientRecord,
    CohortConfig,
    ServerState,
    observed_limits,
    run_round,
    select_cohort,
)
from fpsim.models import NextTokenBOW
from fpsim.secagg import bits_per_update, derive_config, inflated_clip_norm
from fpsim.seeds import SeedPath
from fpsim.tree import init_tree

__all__ = [
    "METRICS_COLUMNS",
    "RunResult",
    "run_experiment",
    "sweep_privacy",
    "compare",
    "write_checkpoint",
    "read_checkpoint",
    "read_metrics",
    "post_hoc_report",
]

METRICS_COLUMNS = (
    "round",
    "eval_acc",
    "train_loss",
    "active_clip",
    "quantile_estimate",
    "cohort_size",
    "cumulative_zcdp",
    "bits_per_update",
)

REPORT_DELTA = 1e-10

CHECKPOINT_MAGIC = b"FPSIM1"


def write_checkpoint(path: str | Path, params: np.ndarray) -> None:
    params = np.asarray(params, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", params.shape[0]))
        fh.write(params.astype("<f8").tobytes())


def read_checkpoint(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    (count,) = struct.unpack_from("<Q", blob, len(CHECKPOINT_MAGIC))
    data = np.frombuffer(blob, dtype="<f8", offset=len(CHECKPOINT_MAGIC) + 8)
    if data.shape[0] != count:
        raise ValueError(f"{path}: truncated checkpoint")
    return data.astype(np.float64)


def _format(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: tuple[str, ...], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(v) for v in row])


def read_metrics(run_dir: str | Path) -> dict[str, list[float]]:
    """Metrics CSV as column lists (floats)."""
    path = Path(run_dir) / "metrics.csv"
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        columns: dict[str, list[float]] = {name: [] for name in reader.fieldnames or ()}
        for row in reader:
            for name, value in row.items():
                columns[name].append(float(value))
    return columns


@dataclass(frozen=True)
class RunResult:
    """Where a run landed and its headline numbers."""

    directory: Path
    final_accuracy: float
    final_rho: float
    observed_max_part: int
    observed_min_sep: int
    config_hash: str


def _equivalent_multiplier(config: ExperimentConfig) -> tuple[float, float]:
    """(tree noise multiplier z_delta, guarantee-side multiplier z)."""
    z = config.noise_multiplier
    if z == 0:
        return 0.0, 0.0
    if config.clip_mode == "adaptive":
        z_delta = noise_split(z, config.sigma_b())
        return z_delta, combined_multiplier(z_delta, config.sigma_b())
    return z, z


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> RunResult:
    """Execute the full training loop and write the run directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    root = SeedPath(config.seed)
    data_cfg = DataConfig(
        vocab_size=config.vocab_size,
        window=config.window,
        examples_per_client=config.examples_per_client,
        heterogeneity=config.heterogeneity,
        concentration=config.concentration,
        eval_examples=config.eval_examples,
    )
    model = NextTokenBOW(vocab_size=config.vocab_size, window=config.window)
    datasets = synthesize_clients(data_cfg, config.population, root)
    eval_set = synthesize_eval_set(data_cfg, root)
    records = [ClientRecord(id=i, dataset=ds) for i, ds in enumerate(datasets)]

    if config.warm_start:
        theta0 = read_checkpoint(config.warm_start)
        if theta0.shape[0] != model.num_params:
            raise ValueError(
                f"warm_start checkpoint has {theta0.shape[0]} parameters, "
                f"model needs {model.num_params}"
            )
    else:
        theta0 = model.init_params(root.child("init"))

    z_delta, z_equiv = _equivalent_multiplier(config)
    clip_state = None
    if config.clip_mode == "adaptive":
        clip_state = ClipState(
            initial_estimate=config.clip_c0,
            target_quantile=config.clip_gamma,
            learning_rate=config.clip_eta_gamma,
            sigma_b=config.sigma_b() if z_delta > 0 else 0.0,
            cohort_size=config.report_goal,
            seed=root.child("clip"),
        )

    secagg_cfg = None
    sensitivity_scale = 1.0
    if config.secagg_enabled:
        secagg_cfg = derive_config(
            clip_norm=config.clip_c0,
            scale=config.secagg_scale,
            model_dim=model.num_params,
            cohort_size=config.report_goal,
            retry_cap=config.secagg_retry_cap,
        )
        sensitivity_scale = inflated_clip_norm(secagg_cfg) / config.clip_c0

    schedule = config.restart_schedule()
    server = ServerState(
        model=model,
        theta0=theta0,
        eta_s=config.eta_s,
        beta=config.beta,
        report_goal=config.report_goal,
        delta_tree=init_tree(z_delta, config.clip_c0, model.num_params, root.child("delta-tree")),
        clip=clip_state,
        fixed_clip=config.clip_c0,
        restart_schedule=schedule,
        seed=root.child("federation"),
        eta_c=config.eta_c,
        batch_size=config.batch_size,
        epochs=config.epochs,
        secagg=secagg_cfg,
    )
    cohort_cfg = CohortConfig(
        population=config.population,
        report_goal=config.report_goal,
        timer_rounds=config.timer_rounds,
        availability=config.availability(),
    )

    worst_max_part = -(-config.rounds // config.timer_rounds)
    metrics_rows = []
    secagg_rows = []
    for t in range(config.rounds):
        cohort_ids = select_cohort(records, cohort_cfg, t, root.child("selection"))
        cohort = [records[i] for i in cohort_ids]
        round_metrics = run_round(server, cohort)
        eval_acc = model.accuracy(server.theta, eval_set.contexts, eval_set.labels)
        if z_equiv == 0:
            rho_so_far = math.inf
        else:
            prefix_schema = ParticipationSchema(
                total_rounds=t + 1,
                min_sep=config.timer_rounds,
                max_part=worst_max_part,
                restart_rounds=schedule.rounds,
            )
            rho_so_far = accounting.zcdp(z_equiv, prefix_schema) * sensitivity_scale**2
        metrics_rows.append(
            (
                t,
                eval_acc,
                round_metrics.train_loss,
                round_metrics.active_clip,
                round_metrics.quantile_estimate,
                round_metrics.cohort_size,
                rho_so_far,
                round_metrics.bits_per_update,
            )
        )
        if secagg_cfg is not None:
            secagg_rows.append(
                (
                    t,
                    round_metrics.bits_per_update,
                    round_metrics.secagg_clamp_fraction,
                    round_metrics.secagg_residual,
                )
            )

    _write_csv(out / "metrics.csv", METRICS_COLUMNS, metrics_rows)
    write_checkpoint(out / "checkpoint.bin", server.theta)
    participation = [
        (rec.id, r) for rec in records for r in rec.participation_rounds
    ]
    _write_csv(out / "participation.csv", ("client_id", "round"), participation)
    if secagg_cfg is not None:
        _write_csv(
            out / "secagg.csv",
            ("round", "bits_per_update", "linf_clamp_fraction", "roundtrip_residual"),
            secagg_rows,
        )
    (out / "config.resolved").write_text(config.canonical_text())

    max_part, min_sep = observed_limits(records, config.rounds)
    ledger = _build_ledger(
        config.rounds, min_sep, max_part, schedule.rounds, z_equiv, sensitivity_scale
    )
    _write_report(out, config, ledger, max_part, min_sep)

    return RunResult(
        directory=out,
        final_accuracy=metrics_rows[-1][1],
        final_rho=ledger.rho,
        observed_max_part=max_part,
        observed_min_sep=min_sep,
        config_hash=config.config_hash(),
    )


def _build_ledger(
    total_rounds: int,
    min_sep: int,
    max_part: int,
    restart_rounds: tuple[int, ...],
    z_equiv: float,
    sensitivity_scale: float,
) -> PrivacyLedger:
    schema = ParticipationSchema(
        total_rounds=total_rounds,
        min_sep=min_sep,
        max_part=max(1, max_part),
        restart_rounds=restart_rounds,
    )
    return PrivacyLedger(schema=schema, z=z_equiv, sensitivity_scale=sensitivity_scale)


REPORT_COLUMNS = (
    "total_rounds",
    "observed_max_part",
    "observed_min_sep",
    "restart_rounds",
    "noise_multiplier",
    "z_equivalent",
    "sensitivity_scale",
    "rho",
    "delta",
    "epsilon",
    "epsilon_loose",
    "config_hash",
)

CAVEATS = (
    "Guarantees cover the released model updates only. Hyperparameter "
    "tuning performed while choosing this configuration is not accounted.",
    "min_sep / max_part are observed post hoc from the participation log; "
    "the guarantee is conditional on that log.",
)


def render_report_text(row: dict[str, object]) -> str:
    lines = ["privacy report", "=============="]
    for key in REPORT_COLUMNS:
        lines.append(f"{key}: {_format(row[key])}")
    if isinstance(row["rho"], float) and math.isinf(row["rho"]):
        lines.append("NOTE: noise multiplier 0 — this run is NOT differentially private.")
    lines.append("")
    lines.append("caveats:")
    for caveat in CAVEATS:
        lines.append(f"  - {caveat}")
    lines.append("")
    return "\n".join(lines)


def _report_row(
    config: ExperimentConfig | None,
    ledger: PrivacyLedger,
    max_part: int,
    min_sep: int,
) -> dict[str, object]:
    return {
        "total_rounds": ledger.schema.total_rounds,
        "observed_max_part": max_part,
        "observed_min_sep": min_sep,
        "restart_rounds": ";".join(str(r) for r in ledger.schema.restart_rounds),
        "noise_multiplier": config.noise_multiplier if config else ledger.z,
        "z_equivalent": ledger.z,
        "sensitivity_scale": ledger.sensitivity_scale,
        "rho": ledger.rho,
        "delta": REPORT_DELTA,
        "epsilon": ledger.epsilon(REPORT_DELTA),
        "epsilon_loose": ledger.loose_epsilon(REPORT_DELTA),
        "config_hash": config.config_hash() if config else "",
    }


def _write_report(
    out: Path,
    config: ExperimentConfig,
    ledger: PrivacyLedger,
    max_part: int,
    min_sep: int,
) -> None:
    row = _report_row(config, ledger, max_part, min_sep)
    _write_csv(out / "report.csv", REPORT_COLUMNS, [tuple(row[k] for k in REPORT_COLUMNS)])
    (out / "report.txt").write_text(render_report_text(row))


def post_hoc_report(run_dir: str | Path) -> dict[str, object]:
    """Recompute a finished run's privacy report from its participation log
    and resolved config (the `account --run` path)."""
    run = Path(run_dir)
    config = ExperimentConfig.from_file(run / "config.resolved")
    by_client: dict[int, list[int]] = {}
    with open(run / "participation.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            by_client.setdefault(int(row["client_id"]), []).append(int(row["round"]))
    max_part = max((len(v) for v in by_client.values()), default=0)
    min_sep = config.rounds
    for rounds in by_client.values():
        rounds.sort()
        for a, b in zip(rounds, rounds[1:]):
            min_sep = min(min_sep, b - a)
    _, z_equiv = _equivalent_multiplier(config)
    sensitivity_scale = 1.0
    if config.secagg_enabled:
        model = NextTokenBOW(vocab_size=config.vocab_size, window=config.window)
        secagg_cfg = derive_config(
            config.clip_c0, config.secagg_scale, model.num_params, config.report_goal,
            config.secagg_retry_cap,
        )
        sensitivity_scale = inflated_clip_norm(secagg_cfg) / config.clip_c0
    ledger = _build_ledger(
        config.rounds,
        min_sep,
        max_part,
        config.restart_schedule().rounds,
        z_equiv,
        sensitivity_scale,
    )
    return _report_row(config, ledger, max_part, min_sep)


def sweep_privacy(sweep_cfg: SweepConfig, out_path: str | Path) -> list[tuple]:
    """Accountant sweep plus CSV emission."""
    rows = accounting.sweep(
        z=sweep_cfg.z,
        report_goal=sweep_cfg.report_goal,
        population=sweep_cfg.population,
        total_rounds_range=sweep_cfg.rounds,
        scaling=sweep_cfg.scaling,
    )
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, accounting.SWEEP_COLUMNS, rows)
    return rows


def compare(
    run_a: str | Path, run_b: str | Path, threshold: float | None = None
) -> list[dict[str, object]]:
    """Align two finished runs: final accuracy, rounds to an accuracy
    threshold (first crossing; default threshold is the smaller of the two
    final accuracies), and final rho."""
    dims = []
    for run in (run_a, run_b):
        params = read_checkpoint(Path(run) / "checkpoint.bin")
        dims.append(params.shape[0])
    if dims[0] != dims[1]:
        raise ValueError(f"model dimensions differ: {dims[0]} vs {dims[1]}")
    tables = [read_metrics(run) for run in (run_a, run_b)]
    finals = [t["eval_acc"][-1] for t in tables]
    if threshold is None:
        threshold = min(finals)
    out = []
    for run, table, final in zip((run_a, run_b), tables, finals):
        crossing = next(
            (int(r) for r, acc in zip(table["round"], table["eval_acc"]) if acc >= threshold),
            None,
        )
        with open(Path(run) / "report.csv", newline="") as fh:
            report = next(csv.DictReader(fh))
        out.append(
            {
                "run": str(run),
                "final_accuracy": final,
                "threshold": threshold,
                "rounds_to_threshold": crossing,
                "rho": float(report["rho"]),
            }
        )
    return out
