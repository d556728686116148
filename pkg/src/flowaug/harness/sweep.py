"""Augmentation-size sweep on one fixed stratified train/valid/test split.

Each run retrains the rare-class flow and the classifier under fresh
derived seeds; each (size, run) cell appends that many synthetic images to
the training set and scores the test split. The recommended size maximizes
mean rare-class F1 subject to a no-harm rule: no other class's mean F1 may
drop more than one point (0.01) below its zero-augmentation mean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..augment import generate_augmentations
from ..core import derive_seed, make_rng
from ..flows import MultiScaleFlow
from ..training import Dequantizer
from ..training import fit as fit_flow
from .classifier import ConvNetClassifier
from .crossval import AugmentRecipe
from .folds import stratified_split
from .metrics import evaluate_predictions
from .synthetic import LabeledDataset

NO_HARM_MARGIN = 0.01


@dataclass
class SweepResult:
    sizes: list[int]
    runs: int
    # per-class F1 on the test split, indexed [size, run, class]
    f1: np.ndarray
    rare_class: int
    recommended_size: int
    split: dict[str, np.ndarray]

    def mean_f1(self) -> np.ndarray:
        return self.f1.mean(axis=1)

    def sd_f1(self) -> np.ndarray:
        return self.f1.std(axis=1)


def recommend_size(sizes: list[int], mean_f1: np.ndarray, baseline_means: np.ndarray, rare_class: int) -> int:
    """Argmax of mean rare-class F1 over sizes whose other-class means stay
    within NO_HARM_MARGIN of the zero-augmentation means. Falls back to the
    unconstrained argmax if no size passes."""
    n_classes = mean_f1.shape[1]
    others = [c for c in range(n_classes) if c != rare_class]
    allowed = [
        i
        for i in range(len(sizes))
        if all(mean_f1[i, c] >= baseline_means[c] - NO_HARM_MARGIN for c in others)
    ]
    pool = allowed if allowed else range(len(sizes))
    best = max(pool, key=lambda i: mean_f1[i, rare_class])
    return sizes[best]


def augmentation_size_sweep(
    dataset: LabeledDataset,
    sizes,
    runs: int,
    seed: int,
    *,
    recipe: AugmentRecipe | None = None,
    rare_class: int = 2,
    classifier_params: dict | None = None,
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
) -> SweepResult:
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("sizes list is empty")
    if any(s < 0 for s in sizes):
        raise ValueError(f"sizes must be >= 0, got {sizes}")
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    recipe = recipe or AugmentRecipe()
    recipe.validate()
    classifier_params = dict(classifier_params or {})
    n_classes = len(dataset.class_names)

    train_idx, valid_idx, test_idx = stratified_split(dataset.labels, fractions, seed)
    rare_train = train_idx[dataset.labels[train_idx] == rare_class]
    if max(sizes) > 0 and rare_train.size < 2:
        raise ValueError(
            f"training split has {rare_train.size} rare-class images; interpolation needs at least 2"
        )

    x_train, y_train = dataset.images[train_idx], dataset.labels[train_idx]
    x_valid, y_valid = dataset.images[valid_idx], dataset.labels[valid_idx]
    x_test, y_test = dataset.images[test_idx], dataset.labels[test_idx]
    shape = dataset.images.shape[1:]

    # size 0 means no flow involvement, so cells at size 0 never train one
    f1 = np.zeros((len(sizes), runs, n_classes))
    for run in range(runs):
        flow = None
        if max(sizes) > 0:
            from dataclasses import replace

            flow = MultiScaleFlow(recipe.flow, shape, seed=derive_seed(seed, f"run{run}", "flow"))
            config = replace(recipe.train, seed=derive_seed(seed, f"run{run}", "flow-train"))
            fit_flow(flow, dataset.images[rare_train], config, dequantizer=Dequantizer())
        for i, size in enumerate(sizes):
            if size > 0:
                aug = generate_augmentations(
                    flow,
                    dataset.images[rare_train],
                    size,
                    recipe.spec,
                    make_rng(seed, f"run{run}", f"size{size}", "augment"),
                    source_ids=rare_train,
                    fold_id=-1,
                )
                xs = np.concatenate([x_train, aug.images])
                ys = np.concatenate([y_train, np.full(size, rare_class, dtype=np.int64)])
            else:
                xs, ys = x_train, y_train
            clf = ConvNetClassifier(
                seed=derive_seed(seed, f"run{run}", f"size{size}", "classifier"),
                **classifier_params,
            ).fit(xs, ys, X_val=x_valid, y_val=y_valid)
            scores = evaluate_predictions(y_test, clf.predict(x_test), n_classes)
            f1[i, run] = scores.f1

    mean_f1 = f1.mean(axis=1)
    if 0 in sizes:
        baseline_means = mean_f1[sizes.index(0)]
    else:
        # no-harm rule needs the zero-augmentation reference; compute it
        baseline = np.zeros((runs, n_classes))
        for run in range(runs):
            clf = ConvNetClassifier(
                seed=derive_seed(seed, f"run{run}", "size0", "classifier"),
                **classifier_params,
            ).fit(x_train, y_train, X_val=x_valid, y_val=y_valid)
            baseline[run] = evaluate_predictions(y_test, clf.predict(x_test), n_classes).f1
        baseline_means = baseline.mean(axis=0)

    return SweepResult(
        sizes=sizes,
        runs=runs,
        f1=f1,
        rare_class=rare_class,
        recommended_size=recommend_size(sizes, mean_f1, baseline_means, rare_class),
        split={"train": train_idx, "valid": valid_idx, "test": test_idx},
    )


def write_sweep_csv(path, result: SweepResult, class_names) -> None:
    """One row per (size, run) with per-class F1 columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size", "run"] + [f"f1_{name}" for name in class_names])
        for i, size in enumerate(result.sizes):
            for run in range(result.runs):
                writer.writerow(
                    [size, run] + [f"{v:.6f}" for v in result.f1[i, run]]
                )


def write_sweep_plot(path, result: SweepResult, class_names) -> None:
    """Mean +- sd F1 against augmentation size, one line per class."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    order = np.argsort(result.sizes)
    sizes = np.array(result.sizes)[order]
    mean = result.mean_f1()[order]
    sd = result.sd_f1()[order]
    fig, ax = plt.subplots(figsize=(6, 4))
    for c, name in enumerate(class_names):
        ax.errorbar(sizes, mean[:, c], yerr=sd[:, c], marker="o", capsize=3, label=name)
    ax.axvline(result.recommended_size, color="gray", linestyle=":", label="recommended")
    ax.set_xlabel("augmentation size")
    ax.set_ylabel("F1 (mean +- sd over runs)")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
