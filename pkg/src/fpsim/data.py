"""Synthetic federated next-token corpus.

Each client holds a short token stream sampled from a Markov chain whose
transition rows are a mixture of a shared global table and a per-client
one:

    P_i(next | prev) = (1 - heterogeneity) * global[prev] + heterogeneity * local_i[prev]

All rows are Dirichlet draws; a small concentration makes them peaked, so
next-token prediction is learnable well above chance.  heterogeneity = 0
gives every client the same (public) distribution — the pretraining corpus
for warm starts; larger values push clients apart, the desk-scale stand-in
for real federated text.

Per-client rows are materialized lazily (only for contexts the client's
stream actually visits) and derived from per-client seeds, so a population
of 10^4 clients synthesizes in seconds and any client is reproducible in
isolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fpsim.seeds import SeedPath

__all__ = ["DataConfig", "TokenDataset", "synthesize_clients", "synthesize_eval_set"]


@dataclass(frozen=True)
class DataConfig:
    """Knobs of the synthetic corpus."""

    vocab_size: int = 100
    window: int = 1
    examples_per_client: int = 50
    heterogeneity: float = 0.3
    concentration: float = 0.1
    eval_examples: int = 1000

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.examples_per_client < 1:
            raise ValueError("examples_per_client must be >= 1")
        if not 0.0 <= self.heterogeneity <= 1.0:
            raise ValueError("heterogeneity must be in [0, 1]")
        if not self.concentration > 0:
            raise ValueError("concentration must be > 0")
        if self.eval_examples < 1:
            raise ValueError("eval_examples must be >= 1")


@dataclass(frozen=True)
class TokenDataset:
    """(context window, next token) pairs for one client or an eval set."""

    contexts: np.ndarray  # (n, window) int64
    labels: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def _global_table(cfg: DataConfig, seed: SeedPath) -> np.ndarray:
    """Row-wise cumulative transition table of the shared global chain."""
    rng = seed.child("global-table").generator()
    rows = rng.dirichlet(np.full(cfg.vocab_size, cfg.concentration), size=cfg.vocab_size)
    return rows.cumsum(axis=1)


def _stream(
    cfg: DataConfig,
    global_cdf: np.ndarray,
    rng: np.random.Generator,
    length: int,
    heterogeneity: float,
) -> np.ndarray:
    """Sample a token stream from the mixed Markov chain, materializing
    per-client rows only for visited contexts.  Sampling a mixture is a
    coin flip selecting which component row to draw from."""
    local_cdfs: dict[int, np.ndarray] = {}
    alpha = np.full(cfg.vocab_size, cfg.concentration)
    last = cfg.vocab_size - 1
    tokens = np.empty(length, dtype=np.int64)
    current = int(rng.integers(cfg.vocab_size))
    for i in range(length):
        if heterogeneity > 0.0 and rng.random() < heterogeneity:
            cdf = local_cdfs.get(current)
            if cdf is None:
                cdf = rng.dirichlet(alpha).cumsum()
                local_cdfs[current] = cdf
        else:
            cdf = global_cdf[current]
        current = min(int(np.searchsorted(cdf, rng.random(), side="right")), last)
        tokens[i] = current
    return tokens


def _windows(tokens: np.ndarray, window: int) -> TokenDataset:
    n = tokens.shape[0] - window
    idx = np.arange(window)[None, :] + np.arange(n)[:, None]
    return TokenDataset(contexts=tokens[idx], labels=tokens[window:].copy())


def synthesize_clients(
    cfg: DataConfig, population: int, seed: SeedPath
) -> list[TokenDataset]:
    """One TokenDataset per client, reproducible per client id."""
    if population < 1:
        raise ValueError("population must be >= 1")
    table = _global_table(cfg, seed)
    datasets = []
    length = cfg.examples_per_client + cfg.window
    for client_id in range(population):
        rng = seed.child("client-stream", client_id).generator()
        tokens = _stream(cfg, table, rng, length, cfg.heterogeneity)
        datasets.append(_windows(tokens, cfg.window))
    return datasets


def synthesize_eval_set(cfg: DataConfig, seed: SeedPath) -> TokenDataset:
    """Held-out stream from the global (public) distribution only."""
    table = _global_table(cfg, seed)
    rng = seed.child("eval-stream").generator()
    tokens = _stream(cfg, table, rng, cfg.eval_examples + cfg.window, heterogeneity=0.0)
    return _windows(tokens, cfg.window)
