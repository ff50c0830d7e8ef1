"""Tests for the flat-parameter softmax models.

The gradient is the one quantity everything downstream trusts blindly, so it
is checked against central finite differences of the loss — an oracle that
shares no code with the analytic backward pass.
"""

import numpy as np
import pytest

from fpsim import NextTokenBOW, SoftmaxRegression, build_model


class TestSoftmaxRegression:
    def test_parameter_count(self):
        m = SoftmaxRegression(num_classes=3, num_features=5)
        assert m.num_params == 15
        assert m.init_params().shape == (15,)

    def test_initial_loss_is_log_k(self):
        """Zero weights give uniform class probabilities: loss = ln(K)."""
        m = SoftmaxRegression(num_classes=7, num_features=4)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(10, 4))
        y = rng.integers(0, 7, size=10)
        loss, _ = m.loss_grad(m.init_params(), x, y)
        assert loss == pytest.approx(np.log(7), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        """Central differences of the loss reproduce the analytic gradient."""
        m = SoftmaxRegression(num_classes=4, num_features=3)
        rng = np.random.default_rng(1)
        params = rng.normal(size=m.num_params) * 0.5
        x = rng.normal(size=(6, 3))
        y = rng.integers(0, 4, size=6)
        _, grad = m.loss_grad(params, x, y)
        h = 1e-6
        for i in range(m.num_params):
            up, down = params.copy(), params.copy()
            up[i] += h
            down[i] -= h
            numeric = (m.loss_grad(up, x, y)[0] - m.loss_grad(down, x, y)[0]) / (2 * h)
            assert grad[i] == pytest.approx(numeric, abs=1e-6), i

    def test_gradient_descent_reduces_loss(self):
        m = SoftmaxRegression(num_classes=3, num_features=2)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(60, 2))
        y = (x[:, 0] > 0).astype(np.int64) + (x[:, 1] > 0)
        params = m.init_params()
        losses = []
        for _ in range(150):
            loss, grad = m.loss_grad(params, x, y)
            losses.append(loss)
            params = params - 0.5 * grad
        assert losses[-1] < losses[0] * 0.75
        assert all(a >= b for a, b in zip(losses, losses[1:]))

    def test_accuracy_on_separable_data(self):
        m = SoftmaxRegression(num_classes=2, num_features=2)
        x = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0], [-2.0, 0.0]])
        y = np.array([1, 0, 1, 0])
        params = m.init_params()
        for _ in range(100):
            _, grad = m.loss_grad(params, x, y)
            params = params - 1.0 * grad
        assert m.accuracy(params, x, y) == 1.0

    def test_uniform_model_accuracy_is_chance_like(self):
        """With zero weights argmax ties break consistently; accuracy is that
        of a constant prediction."""
        m = SoftmaxRegression(num_classes=4, num_features=3)
        rng = np.random.default_rng(3)
        x = rng.normal(size=(1000, 3))
        y = rng.integers(0, 4, size=1000)
        acc = m.accuracy(m.init_params(), x, y)
        assert acc == pytest.approx((y == 0).mean())

    def test_input_validation(self):
        m = SoftmaxRegression(num_classes=3, num_features=5)
        with pytest.raises(ValueError):
            m.loss_grad(np.zeros(7), np.zeros((2, 5)), np.zeros(2, dtype=np.int64))
        with pytest.raises(ValueError):
            m.loss_grad(m.init_params(), np.zeros((2, 4)), np.zeros(2, dtype=np.int64))


class TestNextTokenBOW:
    def test_dimensions(self):
        m = NextTokenBOW(vocab_size=50)
        assert m.num_classes == 50
        assert m.num_features == 50
        assert m.num_params == 2500

    def test_featurize_single_token_window(self):
        """Window 1: features are exact one-hot rows."""
        m = NextTokenBOW(vocab_size=5, window=1)
        contexts = np.array([[0], [3], [4]])
        f = m.featurize(contexts)
        expected = np.zeros((3, 5))
        expected[0, 0] = expected[1, 3] = expected[2, 4] = 1.0
        np.testing.assert_array_equal(f, expected)

    def test_featurize_multi_token_window_averages(self):
        m = NextTokenBOW(vocab_size=4, window=2)
        f = m.featurize(np.array([[1, 3], [2, 2]]))
        np.testing.assert_array_equal(f[0], [0.0, 0.5, 0.0, 0.5])
        np.testing.assert_array_equal(f[1], [0.0, 0.0, 1.0, 0.0])

    def test_learns_a_deterministic_successor_map(self):
        """Token i is always followed by (i+1) mod V; the model must learn
        the permutation to perfect accuracy."""
        v = 6
        m = NextTokenBOW(vocab_size=v, window=1)
        contexts = np.arange(v).reshape(-1, 1)
        labels = (np.arange(v) + 1) % v
        params = m.init_params()
        for _ in range(300):
            _, grad = m.loss_grad(params, contexts, labels)
            params = params - 2.0 * grad
        assert m.accuracy(params, contexts, labels) == 1.0

    def test_gradient_matches_finite_differences(self):
        m = NextTokenBOW(vocab_size=3, window=2)
        rng = np.random.default_rng(4)
        params = rng.normal(size=m.num_params) * 0.3
        contexts = rng.integers(0, 3, size=(5, 2))
        labels = rng.integers(0, 3, size=5)
        _, grad = m.loss_grad(params, contexts, labels)
        h = 1e-6
        flat_checks = rng.choice(m.num_params, size=5, replace=False)
        for i in flat_checks:
            up, down = params.copy(), params.copy()
            up[i] += h
            down[i] -= h
            numeric = (
                m.loss_grad(up, contexts, labels)[0] - m.loss_grad(down, contexts, labels)[0]
            ) / (2 * h)
            assert grad[i] == pytest.approx(numeric, abs=1e-6)

    def test_token_range_validated(self):
        m = NextTokenBOW(vocab_size=4)
        with pytest.raises(ValueError):
            m.featurize(np.array([[4]]))
        with pytest.raises(ValueError):
            m.featurize(np.array([[-1]]))


class TestBuildModel:
    def test_known_kinds(self):
        assert isinstance(build_model("logistic", num_classes=3, num_features=2), SoftmaxRegression)
        assert isinstance(build_model("next_token_bow", vocab_size=8), NextTokenBOW)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            build_model("transformer")
