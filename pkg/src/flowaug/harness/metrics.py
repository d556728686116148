"""Classification metrics with the 0/0 -> 0 convention, plus a paired sign test.

``ClassScores`` holds one evaluation; ``ClassMetrics`` aggregates scores
across folds into per-class means and standard deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    """Counts with true labels on rows and predictions on columns."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} labels outside [0, {n_classes})")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    return conf


@dataclass
class ClassScores:
    """Metrics of a single evaluation. Undefined ratios (0/0) score 0."""

    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float


def evaluate_predictions(y_true, y_pred, n_classes: int) -> ClassScores:
    conf = confusion_matrix(y_true, y_pred, n_classes)
    tp = np.diag(conf).astype(np.float64)
    precision = _safe_divide(tp, conf.sum(axis=0).astype(np.float64))
    recall = _safe_divide(tp, conf.sum(axis=1).astype(np.float64))
    f1 = _safe_divide(2.0 * precision * recall, precision + recall)
    total = conf.sum()
    accuracy = float(tp.sum() / total) if total else 0.0
    return ClassScores(
        confusion=conf,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        accuracy=accuracy,
    )


def evaluate(classifier, images, labels, n_classes: int) -> ClassScores:
    """Score a fitted classifier on one test set."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("empty test set")
    return evaluate_predictions(labels, classifier.predict(images), n_classes)


@dataclass
class ClassMetrics:
    """Cross-fold aggregate: mean and standard deviation per class and overall."""

    precision_mean: np.ndarray
    precision_sd: np.ndarray
    recall_mean: np.ndarray
    recall_sd: np.ndarray
    f1_mean: np.ndarray
    f1_sd: np.ndarray
    macro_precision_mean: float
    macro_precision_sd: float
    macro_recall_mean: float
    macro_recall_sd: float
    macro_f1_mean: float
    macro_f1_sd: float
    accuracy_mean: float
    accuracy_sd: float
    n_folds: int


def aggregate_scores(scores: list[ClassScores]) -> ClassMetrics:
    if not scores:
        raise ValueError("no scores to aggregate")
    precision = np.stack([s.precision for s in scores])
    recall = np.stack([s.recall for s in scores])
    f1 = np.stack([s.f1 for s in scores])
    macro_p = np.array([s.macro_precision for s in scores])
    macro_r = np.array([s.macro_recall for s in scores])
    macro = np.array([s.macro_f1 for s in scores])
    acc = np.array([s.accuracy for s in scores])
    return ClassMetrics(
        precision_mean=precision.mean(axis=0),
        precision_sd=precision.std(axis=0),
        recall_mean=recall.mean(axis=0),
        recall_sd=recall.std(axis=0),
        f1_mean=f1.mean(axis=0),
        f1_sd=f1.std(axis=0),
        macro_precision_mean=float(macro_p.mean()),
        macro_precision_sd=float(macro_p.std()),
        macro_recall_mean=float(macro_r.mean()),
        macro_recall_sd=float(macro_r.std()),
        macro_f1_mean=float(macro.mean()),
        macro_f1_sd=float(macro.std()),
        accuracy_mean=float(acc.mean()),
        accuracy_sd=float(acc.std()),
        n_folds=len(scores),
    )


def sign_test_p(deltas) -> float:
    """One-sided exact binomial p-value for a positive median; zeros are dropped."""
    deltas = np.asarray(deltas, dtype=np.float64)
    nonzero = deltas[deltas != 0.0]
    n = nonzero.size
    if n == 0:
        return 1.0
    wins = int((nonzero > 0).sum())
    total = sum(math.comb(n, i) for i in range(wins, n + 1))
    return total / 2.0**n
