"""Classification metrics: confusion matrix, F1, and rank-based AUC-ROC.

AUC uses the Mann-Whitney formulation (probability that a random positive
outscores a random negative, ties counted one half) computed from midranks,
which matches the all-pairs definition exactly in O(n log n).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


def confusion_matrix(truth: np.ndarray, predicted: np.ndarray, num_classes: int) -> np.ndarray:
    """Counts with rows indexed by true class and columns by predicted class."""
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise DataError("truth and prediction vectors differ in length")
    if truth.size == 0:
        raise DataError("cannot evaluate zero samples")
    for name, v in (("truth", truth), ("prediction", predicted)):
        if v.min() < 0 or v.max() >= num_classes:
            raise DataError(f"{name} label out of range [0, {num_classes})")
    mat = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(mat, (truth, predicted), 1)
    return mat


def f1_scores(
    truth: np.ndarray, predicted: np.ndarray, num_classes: int
) -> tuple[np.ndarray, float]:
    """Per-class F1 (0 when precision + recall is 0) and their unweighted mean."""
    mat = confusion_matrix(truth, predicted, num_classes)
    tp = np.diag(mat).astype(np.float64)
    pred_totals = mat.sum(axis=0).astype(np.float64)
    true_totals = mat.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore"):
        precision = np.where(pred_totals > 0, tp / pred_totals, 0.0)
        recall = np.where(true_totals > 0, tp / true_totals, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    return f1, float(f1.mean())


def auc_roc(truth: np.ndarray, scores: np.ndarray) -> float:
    """Binary AUC-ROC from rank statistics; truth holds 0/1 with 1 positive."""
    truth = np.asarray(truth, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if truth.shape != scores.shape:
        raise DataError("truth and score vectors differ in length")
    n_pos = int((truth == 1).sum())
    n_neg = int((truth == 0).sum())
    if n_pos + n_neg != truth.size:
        raise DataError("truth vector must contain only 0 and 1")
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes present in the truth vector")
    ranks = rankdata(scores)  # midranks, so tied pairs count one half
    pos_rank_sum = float(ranks[truth == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def macro_ovr_auc(
    truth: np.ndarray, prob_matrix: np.ndarray
) -> tuple[float, list[int]]:
    """Unweighted mean of per-class one-vs-rest AUCs.

    Classes absent from the truth vector are skipped and returned, so callers
    can surface them; fewer than two present classes is an error.
    """
    truth = np.asarray(truth, dtype=np.int64)
    prob_matrix = np.asarray(prob_matrix, dtype=np.float64)
    if prob_matrix.ndim != 2 or prob_matrix.shape[0] != truth.size:
        raise DataError("probability matrix shape does not match the truth vector")
    n_classes = prob_matrix.shape[1]
    present = [c for c in range(n_classes) if np.any(truth == c)]
    skipped = [c for c in range(n_classes) if c not in present]
    if len(present) < 2:
        raise DataError("macro one-vs-rest AUC needs at least two classes present")
    aucs = [auc_roc((truth == c).astype(np.int64), prob_matrix[:, c]) for c in present]
    return float(np.mean(aucs)), skipped


@dataclass
class EvalReport:
    """Evaluation summary for one prediction set.

    ``auc`` is the positive-class AUC for the binary task and the macro
    one-vs-rest AUC for the ternary task.  Classes that never occur and are
    never predicted keep F1 = 0 by convention and are listed in
    ``degenerate_f1_classes``.
    """

    task: str
    num_samples: int
    macro_f1: float
    per_class_f1: list[float]
    auc: float
    confusion: list[list[int]]
    degenerate_f1_classes: list[int] = field(default_factory=list)
    auc_skipped_classes: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "num_samples": self.num_samples,
                "macro_f1": self.macro_f1,
                "per_class_f1": self.per_class_f1,
                "auc": self.auc,
                "confusion": self.confusion,
                "degenerate_f1_classes": self.degenerate_f1_classes,
                "auc_skipped_classes": self.auc_skipped_classes,
            },
            sort_keys=True,
            indent=2,
        )

    def render_table(self, name: str = "-") -> str:
        """Fixed-width summary table, one row per metric."""
        rows = [
            ("macro_f1", f"{self.macro_f1:.4f}"),
            ("auc", f"{self.auc:.4f}"),
        ]
        rows += [
            (f"f1_class_{i}", f"{v:.4f}") for i, v in enumerate(self.per_class_f1)
        ]
        lines = [
            f"{'Run':<12}{'Metric':<14}{'Value':>8}",
            "-" * 34,
        ]
        for metric, value in rows:
            lines.append(f"{name:<12}{metric:<14}{value:>8}")
        return "\n".join(lines)


def evaluate_predictions(
    truth: np.ndarray,
    predicted: np.ndarray,
    prob_matrix: np.ndarray,
    task: str,
) -> EvalReport:
    """Build an EvalReport from hard labels plus per-class probabilities."""
    from .corpus import BINARY_POSITIVE, num_classes  # local import avoids a cycle

    n_classes = num_classes(task)
    truth = np.asarray(truth, dtype=np.int64)
    prob_matrix = np.asarray(prob_matrix, dtype=np.float64)
    if prob_matrix.ndim != 2 or prob_matrix.shape != (truth.size, n_classes):
        raise DataError(
            f"probability matrix shape {prob_matrix.shape} does not match "
            f"{truth.size} samples x {n_classes} classes for task {task!r}"
        )
    per_class, macro = f1_scores(truth, predicted, n_classes)
    mat = confusion_matrix(truth, predicted, n_classes)
    degenerate = [
        c
        for c in range(n_classes)
        if mat[c, :].sum() == 0 and mat[:, c].sum() == 0
    ]
    skipped: list[int] = []
    if task == "binary":
        auc = auc_roc(
            (truth == BINARY_POSITIVE).astype(np.int64),
            prob_matrix[:, BINARY_POSITIVE],
        )
    else:
        auc, skipped = macro_ovr_auc(truth, prob_matrix)
    return EvalReport(
        task=task,
        num_samples=int(truth.size),
        macro_f1=macro,
        per_class_f1=[float(v) for v in per_class],
        auc=float(auc),
        confusion=mat.tolist(),
        degenerate_f1_classes=degenerate,
        auc_skipped_classes=skipped,
    )
