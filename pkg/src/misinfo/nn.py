"""Minimal dense neural-network kernel on numpy arrays.

Provides exactly what the trainable models here need: small MLPs with
hand-derived gradients, stable softmax cross-entropy, Adam, inverted
dropout, and a central finite-difference gradient checker.  No autodiff
tape; every architecture derives its own backward pass from these pieces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError

RELU = "relu"
IDENTITY = "identity"


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform(-a, a) init with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


@dataclass
class Mlp:
    """Affine layers with an activation between them (never after the last).

    ``layers`` holds (weight, bias) pairs; weight shapes must compose, the
    weight of layer k being (d_k, d_{k+1}).
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    activation: str = RELU

    def __post_init__(self) -> None:
        if self.activation not in (RELU, IDENTITY):
            raise ConfigError(f"unknown activation {self.activation!r}")
        for (w1, _), (w2, _) in zip(self.layers, self.layers[1:]):
            if w1.shape[1] != w2.shape[0]:
                raise ConfigError(
                    f"layer shapes do not compose: {w1.shape} -> {w2.shape}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in self.layers:
            out.extend((w, b))
        return out


def init_mlp(sizes: Sequence[int], rng: np.random.Generator, activation: str = RELU) -> Mlp:
    """Glorot-initialized MLP with layer widths ``sizes[0] -> ... -> sizes[-1]``."""
    layers = [
        (glorot_uniform(rng, sizes[i], sizes[i + 1]), np.zeros(sizes[i + 1]))
        for i in range(len(sizes) - 1)
    ]
    return Mlp(layers, activation)


def mlp_forward(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward_cached(mlp, x)
    return out


def mlp_forward_cached(
    mlp: Mlp, x: np.ndarray
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Forward pass that also returns per-layer (input, pre-activation) caches."""
    if x.ndim != 2 or x.shape[1] != mlp.in_dim:
        raise ConfigError(
            f"input of shape {x.shape} does not match MLP input width {mlp.in_dim}"
        )
    cache: list[tuple[np.ndarray, np.ndarray]] = []
    h = x
    last = len(mlp.layers) - 1
    for k, (w, b) in enumerate(mlp.layers):
        z = h @ w + b
        cache.append((h, z))
        if k < last and mlp.activation == RELU:
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h, cache


def mlp_backward(
    mlp: Mlp,
    cache: list[tuple[np.ndarray, np.ndarray]],
    grad_out: np.ndarray,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Gradients of all layer parameters and of the input, from d(loss)/d(output)."""
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(mlp.layers)  # type: ignore[list-item]
    dz = grad_out
    last = len(mlp.layers) - 1
    for k in range(last, -1, -1):
        h_in, z = cache[k]
        if k < last and mlp.activation == RELU:
            dz = dz * (z > 0.0)
        w, _ = mlp.layers[k]
        grads[k] = (h_in.T @ dz, dz.sum(axis=0))
        dz = dz @ w.T
    return grads, dz


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its exact gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ConfigError(f"labels shape {labels.shape} does not match {n} logit rows")
    if n == 0:
        raise ConfigError("cannot compute a loss over zero rows")
    if labels.min() < 0 or labels.max() >= c:
        raise ConfigError(f"label out of range [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    loss = float(-log_probs[np.arange(n), labels].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class Adam:
    """Standard Adam with bias correction over a fixed list of parameter arrays."""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        lr: float = 0.01,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = [np.zeros_like(p) for p in params]
        self.second_moment = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """Update ``params`` in place."""
        if len(params) != len(self.first_moment):
            raise ConfigError("parameter list does not match optimizer state")
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(params, grads, self.first_moment, self.second_moment):
            if p.shape != g.shape:
                raise ConfigError(
                    f"gradient shape {g.shape} does not match parameter {p.shape}"
                )
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences.

    Relative errors are measured against max(|analytic| + |numeric|, 1), so
    coordinates with near-zero gradients are judged on absolute agreement.
    """

    max_rel_error: float
    tolerance: float
    per_param_max: list[float]
    failures: list[tuple[int, int, float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(
    fn: Callable[[list[np.ndarray]], tuple[float, list[np.ndarray]]],
    params: Sequence[np.ndarray],
    tolerance: float = 1e-4,
    step: float = 1e-4,
) -> GradCheckReport:
    """Check ``fn``'s analytic gradients against central finite differences.

    ``fn`` maps a parameter list to (loss, gradients) and must be
    deterministic.  Every coordinate of every parameter is perturbed.
    """
    params = [np.array(p, dtype=np.float64) for p in params]
    loss, analytic = fn(params)
    if not np.isfinite(loss):
        raise DataError(f"loss is not finite at the given parameters: {loss}")
    per_param_max: list[float] = []
    failures: list[tuple[int, int, float, float, float]] = []
    max_rel = 0.0
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        a_flat = analytic[pi].reshape(-1)
        worst = 0.0
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            plus, _ = fn(params)
            flat[j] = orig - step
            minus, _ = fn(params)
            flat[j] = orig
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(a_flat[j]) + abs(numeric), 1.0)
            rel = abs(a_flat[j] - numeric) / denom
            if rel > worst:
                worst = rel
            if rel > tolerance:
                failures.append((pi, j, float(a_flat[j]), float(numeric), float(rel)))
        per_param_max.append(worst)
        max_rel = max(max_rel, worst)
    return GradCheckReport(max_rel, tolerance, per_param_max, failures)


def array_to_obj(arr: np.ndarray) -> dict:
    """JSON-friendly encoding of an array: shape metadata plus nested lists."""
    return {"shape": list(arr.shape), "data": arr.tolist()}


def array_from_obj(obj: dict) -> np.ndarray:
    arr = np.array(obj["data"], dtype=np.float64)
    expected = tuple(obj["shape"])
    if arr.shape != expected:
        raise DataError(f"array data shape {arr.shape} does not match metadata {expected}")
    return arr


def mlp_to_obj(mlp: Mlp) -> dict:
    return {
        "activation": mlp.activation,
        "layers": [
            {"weight": array_to_obj(w), "bias": array_to_obj(b)} for w, b in mlp.layers
        ],
    }


def mlp_from_obj(obj: dict) -> Mlp:
    layers = [
        (array_from_obj(layer["weight"]), array_from_obj(layer["bias"]))
        for layer in obj["layers"]
    ]
    return Mlp(layers, obj["activation"])


def dumps_params(obj: dict) -> str:
    """Canonical JSON for parameter files: sorted keys, fixed layout."""
    return json.dumps(obj, sort_keys=True, indent=2)
