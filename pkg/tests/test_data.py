"""Tests for the synthetic next-token data generator.

Clients draw token streams from a mixture of one shared transition table and
a per-client table, with the mixture weight controlling heterogeneity. The
tests pin determinism, shape contracts, the sliding-window construction, and
the statistical fingerprints that federated experiments rely on.
"""

import numpy as np
import pytest

from fpsim import DataConfig, SeedPath, synthesize_clients, synthesize_eval_set


def _cfg(**kw):
    base = dict(
        vocab_size=12,
        window=1,
        examples_per_client=40,
        heterogeneity=0.3,
        concentration=0.1,
        eval_examples=200,
    )
    base.update(kw)
    return DataConfig(**base)


class TestDeterminism:
    def test_same_seed_same_data(self):
        cfg = _cfg()
        a = synthesize_clients(cfg, population=5, seed=SeedPath(1).child("data"))
        b = synthesize_clients(cfg, population=5, seed=SeedPath(1).child("data"))
        for da, db in zip(a, b):
            np.testing.assert_array_equal(da.contexts, db.contexts)
            np.testing.assert_array_equal(da.labels, db.labels)

    def test_different_seed_different_data(self):
        cfg = _cfg()
        a = synthesize_clients(cfg, population=3, seed=SeedPath(1).child("data"))
        b = synthesize_clients(cfg, population=3, seed=SeedPath(2).child("data"))
        assert any(
            not np.array_equal(da.labels, db.labels) for da, db in zip(a, b)
        )

    def test_clients_differ_from_each_other(self):
        cfg = _cfg()
        data = synthesize_clients(cfg, population=4, seed=SeedPath(3).child("data"))
        assert not np.array_equal(data[0].labels, data[1].labels)

    def test_eval_set_deterministic(self):
        cfg = _cfg()
        a = synthesize_eval_set(cfg, seed=SeedPath(4).child("data"))
        b = synthesize_eval_set(cfg, seed=SeedPath(4).child("data"))
        np.testing.assert_array_equal(a.contexts, b.contexts)
        np.testing.assert_array_equal(a.labels, b.labels)


class TestShapes:
    def test_client_dataset_shapes(self):
        cfg = _cfg(window=2, examples_per_client=25)
        data = synthesize_clients(cfg, population=3, seed=SeedPath(5).child("data"))
        assert len(data) == 3
        for ds in data:
            assert len(ds) == 25
            assert ds.contexts.shape == (25, 2)
            assert ds.labels.shape == (25,)

    def test_tokens_in_vocabulary(self):
        cfg = _cfg(vocab_size=7)
        data = synthesize_clients(cfg, population=5, seed=SeedPath(6).child("data"))
        for ds in data:
            assert ds.contexts.min() >= 0 and ds.contexts.max() < 7
            assert ds.labels.min() >= 0 and ds.labels.max() < 7

    def test_eval_set_size(self):
        cfg = _cfg(eval_examples=333)
        ds = synthesize_eval_set(cfg, seed=SeedPath(7).child("data"))
        assert len(ds) == 333


class TestWindowStructure:
    def test_examples_slide_over_one_stream(self):
        """Consecutive examples come from one token stream: each label becomes
        the last context token of the next example."""
        cfg = _cfg(window=3, examples_per_client=30)
        ds = synthesize_clients(cfg, population=1, seed=SeedPath(8).child("data"))[0]
        for i in range(len(ds) - 1):
            np.testing.assert_array_equal(ds.contexts[i + 1, :-1], ds.contexts[i, 1:])
            assert ds.contexts[i + 1, -1] == ds.labels[i]


class TestHeterogeneity:
    def test_zero_heterogeneity_matches_shared_distribution(self):
        """With mixture weight 0 every client samples the shared chain, so
        pooled next-token frequencies given a context token agree across two
        big client groups (chi-square-free: L1 distance on empirical rows)."""
        cfg = _cfg(vocab_size=5, heterogeneity=0.0, examples_per_client=400)
        data = synthesize_clients(cfg, population=20, seed=SeedPath(9).child("data"))

        def empirical_row(datasets, token):
            nxt = np.concatenate(
                [ds.labels[ds.contexts[:, -1] == token] for ds in datasets]
            )
            return np.bincount(nxt, minlength=5) / max(len(nxt), 1)

        for token in range(5):
            a = empirical_row(data[:10], token)
            b = empirical_row(data[10:], token)
            assert np.abs(a - b).sum() < 0.25

    def test_high_heterogeneity_separates_clients(self):
        """With mixture weight ~1 each client follows its own chain; the
        average cross-client disagreement in conditional rows must exceed the
        zero-heterogeneity baseline."""

        def mean_pairwise_row_distance(h, seed):
            cfg = _cfg(vocab_size=5, heterogeneity=h, examples_per_client=400)
            data = synthesize_clients(cfg, population=6, seed=seed)
            rows = []
            for ds in data:
                row = np.zeros((5, 5))
                for token in range(5):
                    nxt = ds.labels[ds.contexts[:, -1] == token]
                    if len(nxt):
                        row[token] = np.bincount(nxt, minlength=5) / len(nxt)
                rows.append(row)
            dists = [
                np.abs(rows[i] - rows[j]).sum()
                for i in range(6)
                for j in range(i + 1, 6)
            ]
            return float(np.mean(dists))

        seed = SeedPath(10).child("data")
        assert mean_pairwise_row_distance(0.95, seed) > 2 * mean_pairwise_row_distance(0.0, seed)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            _cfg(vocab_size=1)
        with pytest.raises(ValueError):
            _cfg(heterogeneity=1.5)
        with pytest.raises(ValueError):
            _cfg(window=0)
