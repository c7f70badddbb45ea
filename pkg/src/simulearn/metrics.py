"""Evaluation metrics for grouped classifiers.

``dacc`` (delimited accuracy) restricts the argmax to the target outputs
and ignores the auxiliary block entirely, so a model can be evaluated and
deployed without stripping its auxiliary head.  Argmax ties always break
toward the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .groups import GroupLayout


def _as_pred_label(predictions, labels, width: int | None = None):
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.ndim != 2 or y.ndim != 2 or p.shape[0] != y.shape[0]:
        raise ShapeError(
            f"need matching (N, n) prediction and label arrays, got {p.shape}, {y.shape}"
        )
    if width is not None and p.shape[1] != width:
        raise ShapeError(f"prediction width {p.shape[1]} != expected {width}")
    return p, y


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of samples whose full-vector argmax hits the hot label index."""
    p, y = _as_pred_label(predictions, labels)
    if p.shape != y.shape:
        raise ShapeError(f"prediction shape {p.shape} != label shape {y.shape}")
    return float(np.mean(np.argmax(p, axis=1) == np.argmax(y, axis=1)))


def dacc(predictions: np.ndarray, labels: np.ndarray, layout: GroupLayout) -> float:
    """Delimited accuracy: argmax over the first k outputs only.

    Labels must all belong to the target group.  Predictions may be k+m
    wide (auxiliary columns are ignored) or already restricted to k.
    """
    p, y = _as_pred_label(predictions, labels)
    if p.shape[1] not in (layout.n, layout.k):
        raise ShapeError(
            f"prediction width {p.shape[1]} matches neither n={layout.n} nor k={layout.k}"
        )
    if y.shape[1] not in (layout.n, layout.k):
        raise ShapeError(f"label width {y.shape[1]} matches neither n nor k")
    hot = np.argmax(y, axis=1)
    if np.any(hot >= layout.k):
        raise ValueError("dacc is defined for target-group samples only")
    return float(np.mean(np.argmax(p[:, : layout.k], axis=1) == hot))


def inter_group_error_rate(
    predictions: np.ndarray, labels: np.ndarray, layout: GroupLayout
) -> float:
    """Fraction of samples whose full argmax lands in the other group."""
    p, y = _as_pred_label(predictions, labels, width=layout.n)
    pred_aux = np.argmax(p, axis=1) >= layout.k
    true_aux = np.argmax(y, axis=1) >= layout.k
    return float(np.mean(pred_aux != true_aux))


def confusion_matrix(
    predictions: np.ndarray, labels: np.ndarray, layout: GroupLayout
) -> np.ndarray:
    """k x k counts over target classes, rows = true class, columns =
    delimited-argmax prediction."""
    p, y = _as_pred_label(predictions, labels)
    hot = np.argmax(y, axis=1)
    if np.any(hot >= layout.k):
        raise ValueError("confusion matrix is defined for target-group samples only")
    pred = np.argmax(p[:, : layout.k], axis=1)
    mat = np.zeros((layout.k, layout.k), dtype=np.int64)
    for t, q in zip(hot, pred):
        mat[t, q] += 1
    return mat


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc_rank_sum(scores: np.ndarray, positives: np.ndarray) -> float:
    """Binary AUC via the rank-sum statistic; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = int(len(scores) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative sample")
    ranks = _average_ranks(scores)
    pos_sum = float(ranks[positives].sum())
    return (pos_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class RocAucResult:
    per_class: dict[int, float]
    macro: float
    skipped: tuple[int, ...]


def roc_auc_ovr(scores: np.ndarray, true_class: np.ndarray) -> RocAucResult:
    """One-vs-rest AUC per target class, plus the unweighted macro mean.

    ``scores`` is (N, k) of per-class scores; ``true_class`` holds integer
    class indices.  Classes with no positives or no negatives are skipped
    and flagged.
    """
    scores = np.asarray(scores, dtype=np.float64)
    true_class = np.asarray(true_class)
    if scores.ndim != 2 or true_class.shape != (scores.shape[0],):
        raise ShapeError(
            f"need (N, k) scores and (N,) labels, got {scores.shape}, {true_class.shape}"
        )
    per_class: dict[int, float] = {}
    skipped: list[int] = []
    for c in range(scores.shape[1]):
        pos = true_class == c
        if pos.all() or not pos.any():
            skipped.append(c)
            continue
        per_class[c] = auc_rank_sum(scores[:, c], pos)
    macro = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    return RocAucResult(per_class, macro, tuple(skipped))


def roc_curve(scores: np.ndarray, positives: np.ndarray):
    """(fpr, tpr, thresholds) swept over the distinct score values,
    highest threshold first; starts at (0, 0) and ends at (1, 1)."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = int(len(scores) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC curve needs at least one positive and one negative sample")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    distinct = np.flatnonzero(np.diff(sorted_scores)).tolist() + [len(scores) - 1]
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(~sorted_pos)
    tpr = np.concatenate([[0.0], tp[distinct] / n_pos])
    fpr = np.concatenate([[0.0], fp[distinct] / n_neg])
    thresholds = np.concatenate([[np.inf], sorted_scores[distinct]])
    return fpr, tpr, thresholds


@dataclass
class EvaluationReport:
    accuracy: float
    dacc: float
    per_class_auc: dict[int, float]
    macro_auc: float
    inter_group_error_rate: float
    confusion: np.ndarray
    skipped_auc_classes: tuple[int, ...] = ()


def evaluate_predictions(
    predictions: np.ndarray, labels: np.ndarray, layout: GroupLayout
) -> EvaluationReport:
    """Full report from target-group predictions and labels."""
    p, y = _as_pred_label(predictions, labels)
    auc = roc_auc_ovr(p[:, : layout.k], np.argmax(y, axis=1))
    ier = (
        inter_group_error_rate(p, y, layout) if p.shape[1] == layout.n and layout.m else 0.0
    )
    return EvaluationReport(
        accuracy=accuracy(p, y) if p.shape == y.shape else float("nan"),
        dacc=dacc(p, y, layout),
        per_class_auc=auc.per_class,
        macro_auc=auc.macro,
        inter_group_error_rate=ier,
        confusion=confusion_matrix(p, y, layout),
        skipped_auc_classes=auc.skipped,
    )
