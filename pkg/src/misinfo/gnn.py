"""Graph neural network for classifying tweet-propagation structures.

Each of the ``num_layers`` message-passing rounds updates every node as

    h_v <- MLP_k((1 + epsilon) * h_v + POOL over neighbors u of h_u)

with a two-layer MLP per round (ReLU between its two affine maps only).
Node inputs are one-hot degree features capped at ``degree_cap``; a graph
readout pools the final node states into one vector, dropout is applied to
that vector during training, and an affine classifier produces the logits.

Everything runs on concatenated-node batches in float64.  Neighbor messages
are stored sorted by destination so pooling is a segmented reduction, and
each pooling mode has an exact adjoint for the backward pass.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import nn
from .corpus import PropagationGraph
from .errors import ConfigError, DataError, MisinfoError
from .metrics import macro_ovr_auc

POOL_MODES = ("sum", "mean", "max")


def degree_features(graph: PropagationGraph, degree_cap: int) -> np.ndarray:
    """One-hot degree features, width ``degree_cap + 1``.

    Degrees of ``degree_cap`` or more share the overflow bucket at the last
    index, so the feature width does not depend on the data.
    """
    if degree_cap < 1:
        raise ConfigError(f"degree_cap must be >= 1, got {degree_cap}")
    deg = np.minimum(graph.degrees(), degree_cap)
    out = np.zeros((graph.num_nodes, degree_cap + 1))
    out[np.arange(graph.num_nodes), deg] = 1.0
    return out


@dataclass
class _Batch:
    """Several graphs packed into one node table.

    ``src`` lists the source node of every directed message (each undirected
    edge contributes both directions), sorted by destination; ``indptr``
    delimits each node's message segment.  ``graph_indptr`` delimits each
    graph's node segment for the readout.
    """

    features: np.ndarray
    src: np.ndarray
    indptr: np.ndarray
    deg: np.ndarray
    sizes: np.ndarray
    graph_indptr: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def _graph_tensors(graph: PropagationGraph, degree_cap: int):
    feats = degree_features(graph, degree_cap)
    if graph.edges:
        e = np.array(graph.edges, dtype=np.int64)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
    else:
        src = np.zeros(0, dtype=np.int64)
        dst = np.zeros(0, dtype=np.int64)
    return feats, src, dst


def _build_batch(tensors: Sequence[tuple]) -> _Batch:
    sizes = np.array([t[0].shape[0] for t in tensors], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    features = (
        np.vstack([t[0] for t in tensors]) if tensors else np.zeros((0, 1))
    )
    src = np.concatenate([t[1] + off for t, off in zip(tensors, offsets)])
    dst = np.concatenate([t[2] + off for t, off in zip(tensors, offsets)])
    order = np.argsort(dst, kind="stable")
    deg = np.bincount(dst, minlength=total)
    indptr = np.concatenate([[0], np.cumsum(deg)])
    return _Batch(features, src[order], indptr, deg, sizes, offsets)


def _segment_sum(values: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    n = indptr.size - 1
    out = np.zeros((n, values.shape[1]))
    if values.shape[0] == 0:
        return out
    nonempty = indptr[:-1] < indptr[1:]
    out[nonempty] = np.add.reduceat(values, indptr[:-1][nonempty], axis=0)
    return out


def _segment_max(values: np.ndarray, indptr: np.ndarray):
    """Per-segment elementwise max plus the row index that attains it.

    Empty segments yield a zero row and argmax -1.  Among ties the lowest
    row wins, which keeps the subgradient choice deterministic.
    """
    n = indptr.size - 1
    dim = values.shape[1]
    out = np.zeros((n, dim))
    arg = np.full((n, dim), -1, dtype=np.int64)
    if values.shape[0] == 0:
        return out, arg
    nonempty = indptr[:-1] < indptr[1:]
    starts = indptr[:-1][nonempty]
    out[nonempty] = np.maximum.reduceat(values, starts, axis=0)
    seg = np.repeat(np.arange(n), np.diff(indptr))
    # The max is always one of the inputs, so exact comparison is safe.
    hit = values == out[seg]
    rows = np.where(hit, np.arange(values.shape[0])[:, None], values.shape[0])
    arg[nonempty] = np.minimum.reduceat(rows, starts, axis=0)
    return out, arg


def _segment_max_backward(dout: np.ndarray, arg: np.ndarray, total_rows: int) -> np.ndarray:
    dim = dout.shape[1]
    grad = np.zeros((total_rows, dim))
    valid = arg >= 0
    if not valid.any():
        return grad
    cols = np.broadcast_to(np.arange(dim), arg.shape)
    flat_idx = arg[valid] * dim + cols[valid]
    flat = np.bincount(flat_idx, weights=dout[valid], minlength=total_rows * dim)
    return flat.reshape(total_rows, dim)


def _neighbor_aggregate(H: np.ndarray, batch: _Batch, epsilon: float, pool: str):
    messages = H[batch.src]
    if pool == "max":
        agg, arg = _segment_max(messages, batch.indptr)
        return (1.0 + epsilon) * H + agg, arg
    agg = _segment_sum(messages, batch.indptr)
    if pool == "mean":
        np.divide(agg, batch.deg[:, None], out=agg, where=batch.deg[:, None] > 0)
    return (1.0 + epsilon) * H + agg, None


def _neighbor_backward(dA: np.ndarray, batch: _Batch, pool: str, arg) -> np.ndarray:
    # The message incidence holds both directions of every edge, so the
    # adjoint of sum pooling is sum pooling again; mean just rescales by the
    # degree of the row that owned the upstream gradient.
    if pool == "sum":
        return _segment_sum(dA[batch.src], batch.indptr)
    if pool == "mean":
        scaled = np.zeros_like(dA)
        np.divide(dA, batch.deg[:, None], out=scaled, where=batch.deg[:, None] > 0)
        return _segment_sum(scaled[batch.src], batch.indptr)
    d_messages = _segment_max_backward(dA, arg, batch.src.size)
    dH = np.zeros_like(dA)
    np.add.at(dH, batch.src, d_messages)
    return dH


def _readout(H: np.ndarray, batch: _Batch, pool: str):
    if pool == "max":
        return _segment_max(H, batch.graph_indptr)
    R = _segment_sum(H, batch.graph_indptr)
    if pool == "mean":
        np.divide(R, batch.sizes[:, None], out=R, where=batch.sizes[:, None] > 0)
    return R, None


def _readout_backward(dR: np.ndarray, batch: _Batch, pool: str, arg) -> np.ndarray:
    if pool == "max":
        return _segment_max_backward(dR, arg, batch.num_nodes)
    if pool == "mean":
        scaled = np.zeros_like(dR)
        np.divide(dR, batch.sizes[:, None], out=scaled, where=batch.sizes[:, None] > 0)
        dR = scaled
    return np.repeat(dR, batch.sizes, axis=0)


def _forward(
    mlps: Sequence[nn.Mlp],
    cls_w: np.ndarray,
    cls_b: np.ndarray,
    batch: _Batch,
    epsilon: float,
    neighbor_pool: str,
    graph_pool: str,
    mask: np.ndarray | None = None,
):
    H = batch.features
    layer_caches = []
    for mlp in mlps:
        A, agg_arg = _neighbor_aggregate(H, batch, epsilon, neighbor_pool)
        H, mlp_cache = nn.mlp_forward_cached(mlp, A)
        layer_caches.append((mlp_cache, agg_arg))
    R, readout_arg = _readout(H, batch, graph_pool)
    dropped = R * mask if mask is not None else R
    logits = dropped @ cls_w + cls_b
    return logits, (layer_caches, readout_arg, dropped, mask)


def _backward(
    mlps: Sequence[nn.Mlp],
    cls_w: np.ndarray,
    batch: _Batch,
    caches,
    dlogits: np.ndarray,
    epsilon: float,
    neighbor_pool: str,
    graph_pool: str,
) -> list[np.ndarray]:
    layer_caches, readout_arg, dropped, mask = caches
    grad_cls_w = dropped.T @ dlogits
    grad_cls_b = dlogits.sum(axis=0)
    dR = dlogits @ cls_w.T
    if mask is not None:
        dR = dR * mask
    dH = _readout_backward(dR, batch, graph_pool, readout_arg)
    per_mlp = []
    for mlp, (mlp_cache, agg_arg) in zip(reversed(mlps), reversed(layer_caches)):
        layer_grads, dA = nn.mlp_backward(mlp, mlp_cache, dH)
        per_mlp.append(layer_grads)
        dH = (1.0 + epsilon) * dA + _neighbor_backward(dA, batch, neighbor_pool, agg_arg)
    grads: list[np.ndarray] = []
    for layer_grads in reversed(per_mlp):
        for dw, db in layer_grads:
            grads.extend((dw, db))
    grads.extend((grad_cls_w, grad_cls_b))
    return grads


class GraphClassifier(BaseEstimator, ClassifierMixin):
    """Propagation-graph classifier trained with minibatch Adam.

    When a validation set is supplied to ``fit``, the parameters giving the
    best validation macro one-vs-rest AUC are kept (earliest epoch on ties);
    otherwise the final-epoch parameters are kept.  ``history_`` records one
    entry per epoch with the mean minibatch loss and the validation AUC.
    """

    def __init__(
        self,
        num_classes: int = 3,
        num_layers: int = 4,
        hidden_dim: int = 128,
        neighbor_pool: str = "max",
        graph_pool: str = "mean",
        dropout: float = 0.3,
        learning_rate: float = 0.01,
        epochs: int = 1000,
        batch_size: int = 32,
        degree_cap: int = 64,
        epsilon: float = 0.0,
        seed: int = 0,
    ):
        self.num_classes = num_classes
        self.num_layers = num_layers
        self.hidden_dim = hidden_dim
        self.neighbor_pool = neighbor_pool
        self.graph_pool = graph_pool
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.degree_cap = degree_cap
        self.epsilon = epsilon
        self.seed = seed

    def _validate_params(self) -> None:
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ConfigError("num_layers and hidden_dim must be >= 1")
        if self.neighbor_pool not in POOL_MODES or self.graph_pool not in POOL_MODES:
            raise ConfigError(f"pooling modes must be one of {POOL_MODES}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.degree_cap < 1:
            raise ConfigError("degree_cap must be >= 1")

    def _init_params(self, rng: np.random.Generator) -> None:
        feature_dim = self.degree_cap + 1
        sizes = [feature_dim] + [self.hidden_dim] * 2
        self.mlps_ = [nn.init_mlp(sizes, rng)]
        for _ in range(self.num_layers - 1):
            self.mlps_.append(nn.init_mlp([self.hidden_dim] * 3, rng))
        self.classifier_weight_ = nn.glorot_uniform(rng, self.hidden_dim, self.num_classes)
        self.classifier_bias_ = np.zeros(self.num_classes)

    def param_arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for mlp in self.mlps_:
            out.extend(mlp.param_arrays())
        out.extend((self.classifier_weight_, self.classifier_bias_))
        return out

    def _unflatten(self, arrays: Sequence[np.ndarray]):
        """View a flat parameter list as (mlps, classifier weight, bias)."""
        expected = 4 * self.num_layers + 2
        if len(arrays) != expected:
            raise ConfigError(f"expected {expected} parameter arrays, got {len(arrays)}")
        mlps = []
        for k in range(self.num_layers):
            a = arrays[4 * k : 4 * k + 4]
            mlps.append(nn.Mlp([(a[0], a[1]), (a[2], a[3])]))
        return mlps, arrays[-2], arrays[-1]

    def fit(
        self,
        graphs: Sequence[PropagationGraph],
        y: Sequence[int],
        valid_graphs: Sequence[PropagationGraph] | None = None,
        valid_y: Sequence[int] | None = None,
    ) -> "GraphClassifier":
        self._validate_params()
        y = np.asarray(y, dtype=np.int64)
        if len(graphs) == 0 or len(graphs) != y.size:
            raise DataError("graphs and labels must be non-empty and equally long")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise DataError(f"label out of range [0, {self.num_classes})")
        present = np.bincount(y, minlength=self.num_classes)
        missing = np.flatnonzero(present == 0)
        if missing.size:
            raise DataError(f"class {int(missing[0])} absent from training graphs")
        if (valid_graphs is None) != (valid_y is None):
            raise ConfigError("valid_graphs and valid_y must be given together")
        if valid_y is not None:
            valid_y = np.asarray(valid_y, dtype=np.int64)
            if len(valid_graphs) != valid_y.size:
                raise DataError("validation graphs and labels differ in length")
            if np.unique(valid_y).size < 2:
                raise DataError("validation part must contain at least two classes")

        rng = np.random.default_rng(self.seed)
        self._init_params(rng)
        self.classes_ = np.arange(self.num_classes)
        params = self.param_arrays()
        optimizer = nn.Adam(params, lr=self.learning_rate)

        tensors = [_graph_tensors(g, self.degree_cap) for g in graphs]
        valid_batches = None
        if valid_graphs is not None:
            valid_batches = self._make_batches(valid_graphs)

        self.history_: list[dict] = []
        best_auc = -np.inf
        best_snapshot = None
        self.best_epoch_ = None
        self.best_valid_auc_ = None
        n = len(graphs)
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(n)
            losses = []
            for start in range(0, n, self.batch_size):
                chunk = order[start : start + self.batch_size]
                batch = _build_batch([tensors[i] for i in chunk])
                mask = None
                if self.dropout > 0.0:
                    mask = nn.dropout_mask(
                        rng, (chunk.size, self.hidden_dim), self.dropout
                    )
                logits, caches = _forward(
                    self.mlps_,
                    self.classifier_weight_,
                    self.classifier_bias_,
                    batch,
                    self.epsilon,
                    self.neighbor_pool,
                    self.graph_pool,
                    mask,
                )
                loss, dlogits = nn.softmax_cross_entropy(logits, y[chunk])
                grads = _backward(
                    self.mlps_,
                    self.classifier_weight_,
                    batch,
                    caches,
                    dlogits,
                    self.epsilon,
                    self.neighbor_pool,
                    self.graph_pool,
                )
                optimizer.step(params, grads)
                losses.append(loss)
            entry = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "valid_auc": None,
            }
            if valid_batches is not None:
                probs = self._predict_batches(valid_batches)
                auc, _ = macro_ovr_auc(valid_y, probs)
                entry["valid_auc"] = auc
                if auc > best_auc:
                    best_auc = auc
                    best_snapshot = [p.copy() for p in params]
                    self.best_epoch_ = epoch
                    self.best_valid_auc_ = auc
            self.history_.append(entry)
        if best_snapshot is not None:
            for p, s in zip(params, best_snapshot):
                p[...] = s
        return self

    def _make_batches(self, graphs: Sequence[PropagationGraph]) -> list[_Batch]:
        tensors = [_graph_tensors(g, self.degree_cap) for g in graphs]
        return [
            _build_batch(tensors[i : i + self.batch_size])
            for i in range(0, len(tensors), self.batch_size)
        ]

    def _predict_batches(self, batches: Sequence[_Batch]) -> np.ndarray:
        rows = []
        for batch in batches:
            logits, _ = _forward(
                self.mlps_,
                self.classifier_weight_,
                self.classifier_bias_,
                batch,
                self.epsilon,
                self.neighbor_pool,
                self.graph_pool,
            )
            rows.append(nn.softmax(logits))
        if not rows:
            return np.zeros((0, self.num_classes))
        return np.vstack(rows)

    def predict_proba(self, graphs: Sequence[PropagationGraph]) -> np.ndarray:
        if not hasattr(self, "mlps_"):
            raise ConfigError("model is not fitted")
        return self._predict_batches(self._make_batches(graphs))

    def predict(self, graphs: Sequence[PropagationGraph]) -> np.ndarray:
        return np.argmax(self.predict_proba(graphs), axis=1)

    def loss_and_grads(
        self,
        graphs: Sequence[PropagationGraph],
        y: Sequence[int],
        params: Sequence[np.ndarray] | None = None,
    ) -> tuple[float, list[np.ndarray]]:
        """Full-batch loss and parameter gradients, dropout disabled.

        ``params`` may substitute a parameter list of matching shapes, which
        makes the model loss a pure function for finite-difference checks.
        """
        if not hasattr(self, "mlps_"):
            raise ConfigError("model is not fitted")
        y = np.asarray(y, dtype=np.int64)
        if params is None:
            mlps, cls_w, cls_b = self.mlps_, self.classifier_weight_, self.classifier_bias_
        else:
            mlps, cls_w, cls_b = self._unflatten(list(params))
        batch = _build_batch([_graph_tensors(g, self.degree_cap) for g in graphs])
        logits, caches = _forward(
            mlps, cls_w, cls_b, batch, self.epsilon, self.neighbor_pool, self.graph_pool
        )
        loss, dlogits = nn.softmax_cross_entropy(logits, y)
        grads = _backward(
            mlps, cls_w, batch, caches, dlogits,
            self.epsilon, self.neighbor_pool, self.graph_pool,
        )
        return loss, grads

    def to_params(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "num_layers": self.num_layers,
            "hidden_dim": self.hidden_dim,
            "neighbor_pool": self.neighbor_pool,
            "graph_pool": self.graph_pool,
            "dropout": self.dropout,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "degree_cap": self.degree_cap,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "best_epoch": self.best_epoch_,
            "best_valid_auc": self.best_valid_auc_,
            "mlps": [nn.mlp_to_obj(m) for m in self.mlps_],
            "classifier_weight": nn.array_to_obj(self.classifier_weight_),
            "classifier_bias": nn.array_to_obj(self.classifier_bias_),
        }

    @classmethod
    def from_params(cls, obj: dict) -> "GraphClassifier":
        model = cls(
            num_classes=int(obj["num_classes"]),
            num_layers=int(obj["num_layers"]),
            hidden_dim=int(obj["hidden_dim"]),
            neighbor_pool=obj["neighbor_pool"],
            graph_pool=obj["graph_pool"],
            dropout=float(obj["dropout"]),
            learning_rate=float(obj["learning_rate"]),
            epochs=int(obj["epochs"]),
            batch_size=int(obj["batch_size"]),
            degree_cap=int(obj["degree_cap"]),
            epsilon=float(obj["epsilon"]),
            seed=int(obj["seed"]),
        )
        model._validate_params()
        model.classes_ = np.arange(model.num_classes)
        model.mlps_ = [nn.mlp_from_obj(m) for m in obj["mlps"]]
        model.classifier_weight_ = nn.array_from_obj(obj["classifier_weight"])
        model.classifier_bias_ = nn.array_from_obj(obj["classifier_bias"])
        model.best_epoch_ = obj.get("best_epoch")
        model.best_valid_auc_ = obj.get("best_valid_auc")
        return model


@dataclass
class GridSearchResult:
    """Every cell's outcome plus the winning configuration.

    ``cells`` entries hold the full effective config, the validation AUC
    (None when training failed) and a status string.
    """

    cells: list[dict]
    best_index: int
    best_config: dict
    best_valid_auc: float
    model: GraphClassifier

    def to_obj(self) -> dict:
        return {
            "cells": self.cells,
            "best_index": self.best_index,
            "best_config": self.best_config,
            "best_valid_auc": self.best_valid_auc,
        }


def _run_grid_cell(args) -> tuple[int, float | None, str | None]:
    index, config, train_graphs, train_y, valid_graphs, valid_y = args
    try:
        model = GraphClassifier(**config).fit(train_graphs, train_y, valid_graphs, valid_y)
        return index, model.best_valid_auc_, None
    except (MisinfoError, FloatingPointError, ValueError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def grid_search(
    train_graphs: Sequence[PropagationGraph],
    train_y: Sequence[int],
    valid_graphs: Sequence[PropagationGraph],
    valid_y: Sequence[int],
    grid: dict[str, list],
    base_config: dict | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> GridSearchResult:
    """Exhaustive search over the Cartesian product of ``grid`` values.

    Cells are enumerated with the rightmost grid key varying fastest, in the
    key order of ``grid``; cell k trains with seed ``seed + k``, so results
    do not depend on how cells are scheduled across workers.  The winner has
    the highest validation AUC; ties prefer the smaller hidden_dim, then the
    smaller learning_rate, then the earlier cell.  Failed cells are recorded
    rather than fatal; only all cells failing is an error.
    """
    if not grid:
        raise ConfigError("grid must contain at least one hyperparameter")
    unknown = set(grid) - set(GraphClassifier().get_params())
    if unknown:
        raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
    keys = list(grid)
    configs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        config = dict(base_config or {})
        config.update(zip(keys, values))
        config["seed"] = seed + len(configs)
        configs.append(config)

    tasks = [
        (i, cfg, list(train_graphs), train_y, list(valid_graphs), valid_y)
        for i, cfg in enumerate(configs)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_grid_cell, tasks))
    else:
        outcomes = [_run_grid_cell(t) for t in tasks]

    cells = []
    for (index, auc, error), config in zip(outcomes, configs):
        effective = GraphClassifier(**config).get_params()
        cell = {
            "config": effective,
            "valid_auc": auc,
            "status": "ok" if error is None else "failed",
        }
        if error is not None:
            cell["error"] = error
        cells.append(cell)

    scored = [(i, c) for i, c in enumerate(cells) if c["valid_auc"] is not None]
    if not scored:
        raise DataError("every grid cell failed to train")
    best_auc = max(c["valid_auc"] for _, c in scored)
    tied = [
        (c["config"]["hidden_dim"], c["config"]["learning_rate"], i)
        for i, c in scored
        if c["valid_auc"] == best_auc
    ]
    best_index = min(tied)[2]
    best_model = GraphClassifier(**configs[best_index]).fit(
        train_graphs, train_y, valid_graphs, valid_y
    )
    return GridSearchResult(cells, best_index, cells[best_index]["config"], best_auc, best_model)
