"""Base text classifiers: multinomial Naive Bayes over bag-of-words counts
and multinomial logistic regression over precomputed embeddings.

Both follow the scikit-learn estimator protocol (fit / predict /
predict_proba / get_params) and expose per-class posterior probabilities,
which is what the late-fusion rules consume.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils import check_array

from . import nn
from .errors import ConfigError, DataError
from .features import EmbeddingTable, SparseVector


class NaiveBayesClassifier(BaseEstimator, ClassifierMixin):
    """Multinomial Naive Bayes with Laplace smoothing on sparse count vectors.

    Likelihoods follow P(token | class) = (count + alpha) / (total + alpha * V)
    where V is the vocabulary size; posteriors are computed in log space and
    normalized stably.  An input with no in-vocabulary tokens scores the
    class priors.
    """

    def __init__(self, num_classes: int = 3, alpha: float = 1.0):
        self.num_classes = num_classes
        self.alpha = alpha

    def fit(
        self,
        X: Sequence[SparseVector],
        y: Sequence[int],
        vocab_size: int | None = None,
    ) -> "NaiveBayesClassifier":
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        y = np.asarray(y, dtype=np.int64)
        if len(X) == 0 or len(X) != y.size:
            raise DataError("X and y must be non-empty and equally long")
        if vocab_size is None or vocab_size < 1:
            raise ConfigError("vocab_size must be a positive integer")
        class_counts = np.bincount(y, minlength=self.num_classes)
        if y.min() < 0 or y.max() >= self.num_classes:
            raise DataError(f"label out of range [0, {self.num_classes})")
        missing = np.flatnonzero(class_counts == 0)
        if missing.size:
            raise DataError(
                f"class {int(missing[0])} absent from training data; priors undefined"
            )
        token_counts = np.zeros((self.num_classes, vocab_size), dtype=np.float64)
        for vec, label in zip(X, y):
            for idx, cnt in vec.entries:
                if idx >= vocab_size:
                    raise DataError(f"token index {idx} exceeds vocabulary size {vocab_size}")
                token_counts[label, idx] += cnt
        totals = token_counts.sum(axis=1, keepdims=True)
        self.vocab_size_ = int(vocab_size)
        self.classes_ = np.arange(self.num_classes)
        self.log_priors_ = np.log(class_counts / y.size)
        self.log_likelihoods_ = np.log(token_counts + self.alpha) - np.log(
            totals + self.alpha * vocab_size
        )
        return self

    def _log_scores(self, vec: SparseVector) -> np.ndarray:
        scores = self.log_priors_.copy()
        for idx, cnt in vec.entries:
            scores += cnt * self.log_likelihoods_[:, idx]
        return scores

    def predict_proba(self, X: Sequence[SparseVector]) -> np.ndarray:
        out = np.empty((len(X), self.num_classes))
        for i, vec in enumerate(X):
            scores = self._log_scores(vec)
            e = np.exp(scores - scores.max())
            out[i] = e / e.sum()
        return out

    def predict(self, X: Sequence[SparseVector]) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_params(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "alpha": self.alpha,
            "vocab_size": self.vocab_size_,
            "log_priors": nn.array_to_obj(self.log_priors_),
            "log_likelihoods": nn.array_to_obj(self.log_likelihoods_),
        }

    @classmethod
    def from_params(cls, obj: dict) -> "NaiveBayesClassifier":
        model = cls(num_classes=int(obj["num_classes"]), alpha=float(obj["alpha"]))
        model.vocab_size_ = int(obj["vocab_size"])
        model.classes_ = np.arange(model.num_classes)
        model.log_priors_ = nn.array_from_obj(obj["log_priors"])
        model.log_likelihoods_ = nn.array_from_obj(obj["log_likelihoods"])
        return model


def lr_loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Softmax cross-entropy plus l2 * ||W||^2 / 2, with exact gradients."""
    logits = X @ weights + bias
    ce, grad_logits = nn.softmax_cross_entropy(logits, y)
    loss = ce + 0.5 * l2 * float((weights**2).sum())
    grad_w = X.T @ grad_logits + l2 * weights
    grad_b = grad_logits.sum(axis=0)
    return loss, grad_w, grad_b


class EmbeddingLogisticRegression(BaseEstimator, ClassifierMixin):
    """Multinomial (softmax) logistic regression trained with minibatch Adam.

    Weights start at zero, so an untrained model predicts the uniform
    distribution; the problem is convex and needs no symmetry breaking.
    Given the same seed, training is fully deterministic.
    """

    def __init__(
        self,
        num_classes: int = 3,
        learning_rate: float = 0.01,
        epochs: int = 300,
        batch_size: int = 32,
        l2: float = 1e-4,
        seed: int = 0,
    ):
        self.num_classes = num_classes
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2 = l2
        self.seed = seed

    def fit(self, X: np.ndarray, y: Sequence[int]) -> "EmbeddingLogisticRegression":
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] != y.size:
            raise DataError("X and y must be equally long")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate <= 0 or self.l2 < 0:
            raise ConfigError("learning_rate must be > 0 and l2 >= 0")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise DataError(f"label out of range [0, {self.num_classes})")
        if np.unique(y).size < 2:
            raise DataError("training data must contain at least two classes")
        n, dim = X.shape
        self.dim_ = dim
        self.classes_ = np.arange(self.num_classes)
        self.weights_ = np.zeros((dim, self.num_classes))
        self.bias_ = np.zeros(self.num_classes)
        rng = np.random.default_rng(self.seed)
        optimizer = nn.Adam([self.weights_, self.bias_], lr=self.learning_rate)
        self.loss_history_ = []
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start : start + self.batch_size]
                _, grad_w, grad_b = lr_loss_and_grad(
                    self.weights_, self.bias_, X[batch], y[batch], self.l2
                )
                optimizer.step([self.weights_, self.bias_], [grad_w, grad_b])
            epoch_loss, _, _ = lr_loss_and_grad(self.weights_, self.bias_, X, y, self.l2)
            self.loss_history_.append(epoch_loss)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[None, :]
        if X.shape[1] != self.dim_:
            raise DataError(
                f"input dimension {X.shape[1]} does not match model dimension {self.dim_}"
            )
        probs = nn.softmax(X @ self.weights_ + self.bias_)
        return probs[0] if squeeze else probs

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(np.atleast_2d(self.predict_proba(X)), axis=1)

    def to_params(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "l2": self.l2,
            "seed": self.seed,
            "dim": self.dim_,
            "weights": nn.array_to_obj(self.weights_),
            "bias": nn.array_to_obj(self.bias_),
        }

    @classmethod
    def from_params(cls, obj: dict) -> "EmbeddingLogisticRegression":
        model = cls(
            num_classes=int(obj["num_classes"]),
            learning_rate=float(obj["learning_rate"]),
            epochs=int(obj["epochs"]),
            batch_size=int(obj["batch_size"]),
            l2=float(obj["l2"]),
            seed=int(obj["seed"]),
        )
        model.dim_ = int(obj["dim"])
        model.classes_ = np.arange(model.num_classes)
        model.weights_ = nn.array_from_obj(obj["weights"])
        model.bias_ = nn.array_from_obj(obj["bias"])
        return model


def train_on_embeddings(
    table: EmbeddingTable,
    ids: Sequence[str],
    labels: Sequence[int],
    **config,
) -> EmbeddingLogisticRegression:
    """Fit a logistic regression on the embedding rows for ``ids``.

    Raises DataError naming the first id missing from the table.
    """
    X = table.matrix_for(ids)
    return EmbeddingLogisticRegression(**config).fit(X, labels)
