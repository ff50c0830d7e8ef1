"""Built-in models: multinomial logistic regression and a bag-of-words
next-token predictor.

A model, to the training loop, is three things: initial parameters (a flat
float64 vector), a mean loss-and-gradient on a minibatch, and a top-1
accuracy evaluator.  Both built-ins are linear softmax classifiers; the
next-token model additionally turns integer token windows into normalized
bag-of-words feature vectors, so a vocabulary of V tokens costs V*V
parameters — a few-megabyte model that trains in seconds at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fpsim.seeds import SeedPath

__all__ = ["SoftmaxRegression", "NextTokenBOW", "build_model"]


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


@dataclass(frozen=True)
class SoftmaxRegression:
    """Multinomial logistic regression over dense feature vectors.

    Parameters are the flattened (num_classes x num_features) weight
    matrix; no bias terms (a constant feature can supply one).
    """

    num_classes: int
    num_features: int

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.num_features < 1:
            raise ValueError("num_features must be >= 1")

    @property
    def num_params(self) -> int:
        return self.num_classes * self.num_features

    def init_params(self, seed: SeedPath | None = None) -> np.ndarray:
        """Zero weights: the canonical convex starting point; the seed is
        accepted for interface uniformity but not needed."""
        del seed
        return np.zeros(self.num_params, dtype=np.float64)

    def _weights(self, params: np.ndarray) -> np.ndarray:
        if params.shape != (self.num_params,):
            raise ValueError("params have the wrong length for this model")
        return params.reshape(self.num_classes, self.num_features)

    def featurize(self, inputs: np.ndarray) -> np.ndarray:
        features = np.asarray(inputs, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.num_features:
            raise ValueError("inputs must be (batch, num_features)")
        return features

    def loss_grad(
        self, params: np.ndarray, inputs: np.ndarray, labels: np.ndarray
    ) -> tuple[float, np.ndarray]:
        """Mean cross-entropy over the batch and its flat gradient."""
        features = self.featurize(inputs)
        labels = np.asarray(labels)
        batch = features.shape[0]
        if batch == 0:
            raise ValueError("empty batch")
        probs = _softmax_rows(features @ self._weights(params).T)
        rows = np.arange(batch)
        loss = float(-np.log(np.maximum(probs[rows, labels], 1e-300)).mean())
        probs[rows, labels] -= 1.0
        grad = (probs.T @ features) / batch
        return loss, grad.reshape(-1)

    def accuracy(self, params: np.ndarray, inputs: np.ndarray, labels: np.ndarray) -> float:
        """Top-1 accuracy; argmax ties resolve to the lowest class index."""
        features = self.featurize(inputs)
        predictions = (features @ self._weights(params).T).argmax(axis=1)
        return float((predictions == np.asarray(labels)).mean())


@dataclass(frozen=True)
class NextTokenBOW(SoftmaxRegression):
    """Next-token prediction from a bag-of-words context window.

    Inputs are integer arrays (batch, window) of token ids; each window is
    embedded as the mean of its tokens' one-hot vectors, and the classes
    are the vocabulary itself.
    """

    window: int = 1

    def __init__(self, vocab_size: int, window: int = 1) -> None:
        object.__setattr__(self, "window", int(window))
        super().__init__(num_classes=int(vocab_size), num_features=int(vocab_size))
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def vocab_size(self) -> int:
        return self.num_classes

    def featurize(self, inputs: np.ndarray) -> np.ndarray:
        contexts = np.asarray(inputs)
        if contexts.ndim != 2 or contexts.shape[1] != self.window:
            raise ValueError("inputs must be (batch, window) token ids")
        if contexts.size and (contexts.min() < 0 or contexts.max() >= self.vocab_size):
            raise ValueError("token ids out of vocabulary range")
        batch = contexts.shape[0]
        features = np.zeros((batch, self.vocab_size), dtype=np.float64)
        np.add.at(features, (np.arange(batch)[:, None], contexts), 1.0 / self.window)
        return features


def build_model(kind: str, **kwargs) -> SoftmaxRegression:
    """Construct a built-in model from a config-style spec."""
    if kind == "logistic":
        return SoftmaxRegression(
            num_classes=int(kwargs["num_classes"]),
            num_features=int(kwargs["num_features"]),
        )
    if kind == "next_token_bow":
        return NextTokenBOW(
            vocab_size=int(kwargs["vocab_size"]), window=int(kwargs.get("window", 1))
        )
    raise ValueError(f"unknown model kind: {kind!r}")
