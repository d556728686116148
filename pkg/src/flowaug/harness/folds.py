"""Stratified fold assignment and split helpers.

Folds are index sets over a labeled dataset. Stratification deals each
class round-robin into folds, so per-fold class counts differ by at most
one sample from perfect proportionality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import make_rng


@dataclass
class FoldPlan:
    folds: list[np.ndarray]

    @property
    def k(self) -> int:
        return len(self.folds)

    def test_indices(self, fold: int) -> np.ndarray:
        return self.folds[fold]

    def train_indices(self, fold: int) -> np.ndarray:
        others = [f for i, f in enumerate(self.folds) if i != fold]
        return np.sort(np.concatenate(others))


def stratified_kfold(labels: np.ndarray, k: int, seed: int) -> FoldPlan:
    """Disjoint folds covering all indices, class-proportional within one sample."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"need at least 2 folds, got k={k}")
    assignments: list[list[int]] = [[] for _ in range(k)]
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < k:
            raise ValueError(
                f"class {c} has {idx.size} samples, fewer than k={k} folds"
            )
        perm = make_rng(seed, "folds", f"class{int(c)}").permutation(idx)
        for j, g in enumerate(perm):
            assignments[j % k].append(int(g))
    return FoldPlan(folds=[np.sort(np.array(a, dtype=np.int64)) for a in assignments])


def stratified_split(labels: np.ndarray, fractions, seed: int) -> list[np.ndarray]:
    """Split indices into len(fractions) stratified parts with exact-count rounding."""
    labels = np.asarray(labels)
    fractions = list(fractions)
    if not fractions or any(f <= 0 for f in fractions):
        raise ValueError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    parts: list[list[int]] = [[] for _ in fractions]
    for c in np.unique(labels):
        idx = make_rng(seed, "split", f"class{int(c)}").permutation(
            np.flatnonzero(labels == c)
        )
        counts = [int(math.floor(f * idx.size)) for f in fractions]
        remainders = [f * idx.size - n for f, n in zip(fractions, counts)]
        for _ in range(idx.size - sum(counts)):
            i = int(np.argmax(remainders))
            counts[i] += 1
            remainders[i] = -1.0
        start = 0
        for part, count in zip(parts, counts):
            part.extend(int(g) for g in idx[start : start + count])
            start += count
    return [np.sort(np.array(p, dtype=np.int64)) for p in parts]
