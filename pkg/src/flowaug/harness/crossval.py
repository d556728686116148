"""Paired cross-validation comparing classifiers with and without
flow-interpolation oversampling of the rare class.

Both arms share the fold plan, the classifier configuration, the
classifier seed, and one validation subset carved from the fold's real
training images; they differ only in the synthetic rare-class images
appended to the augmented arm's training set. Validating on real images
keeps early stopping comparable across arms. The flow behind the synthetic
images is trained per fold, on rare-class images from that fold's training
split only, and every synthetic image carries the global indices of its
two sources so leakage is checkable as an exact set assertion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from ..augment import AugmentationSet, InterpolationSpec, Provenance, generate_augmentations
from ..core import derive_seed, make_rng
from ..flows import FlowConfig, MultiScaleFlow
from ..training import Dequantizer, TrainConfig
from ..training import fit as fit_flow
from .classifier import ConvNetClassifier
from .folds import FoldPlan, stratified_kfold, stratified_split
from .metrics import ClassMetrics, ClassScores, aggregate_scores, evaluate_predictions, sign_test_p
from .synthetic import LabeledDataset


@dataclass
class AugmentRecipe:
    """Everything the augmented arm needs: how many synthetic images to
    append per fold, and how to train the flow that produces them."""

    count: int = 250
    flow: FlowConfig = field(default_factory=FlowConfig)
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            epochs=40, batch_size=32, warmup_steps=100, max_lr=1e-3
        )
    )
    spec: InterpolationSpec = field(
        default_factory=lambda: InterpolationSpec(mode="spherical", t_low=0.35, t_high=0.65)
    )

    def validate(self) -> None:
        if self.count < 0:
            raise ValueError(f"count must be >= 0, got {self.count}")
        self.flow.validate()
        self.train.validate()
        self.spec.validate()


@dataclass
class FoldRecord:
    fold_id: int
    train_indices: np.ndarray
    test_indices: np.ndarray
    flow_train_indices: np.ndarray
    provenance: list[Provenance]
    baseline: ClassScores
    augmented: ClassScores


@dataclass
class CrossValResult:
    baseline: ClassMetrics
    augmented: ClassMetrics
    records: list[FoldRecord]
    rare_class: int
    rare_f1_deltas: np.ndarray
    delta_mean: float
    delta_median: float
    p_value: float


VAL_FRACTION = 0.15


def _fit_arm(
    images: np.ndarray,
    labels: np.ndarray,
    val: tuple[np.ndarray, np.ndarray],
    seed: int,
    classifier_params: dict,
) -> ConvNetClassifier:
    return ConvNetClassifier(seed=seed, **classifier_params).fit(
        images, labels, X_val=val[0], y_val=val[1]
    )


def train_fold_flow(
    dataset: LabeledDataset,
    flow_train_indices: np.ndarray,
    recipe: AugmentRecipe,
    seed: int,
    fold_id: int,
) -> MultiScaleFlow:
    """Fit the rare-class flow for one fold on training-split images only."""
    shape = dataset.images.shape[1:]
    flow = MultiScaleFlow(recipe.flow, shape, seed=derive_seed(seed, f"fold{fold_id}", "flow"))
    config = replace(recipe.train, seed=derive_seed(seed, f"fold{fold_id}", "flow-train"))
    fit_flow(flow, dataset.images[flow_train_indices], config, dequantizer=Dequantizer())
    return flow


def augment_fold(
    dataset: LabeledDataset,
    flow: MultiScaleFlow,
    flow_train_indices: np.ndarray,
    recipe: AugmentRecipe,
    seed: int,
    fold_id: int,
) -> AugmentationSet:
    return generate_augmentations(
        flow,
        dataset.images[flow_train_indices],
        recipe.count,
        recipe.spec,
        make_rng(seed, f"fold{fold_id}", "augment"),
        source_ids=flow_train_indices,
        fold_id=fold_id,
    )


def cross_validate(
    dataset: LabeledDataset,
    k: int,
    augment: AugmentRecipe | None,
    seed: int,
    *,
    rare_class: int = 2,
    classifier_params: dict | None = None,
) -> CrossValResult:
    """Run both arms over a shared stratified fold plan.

    With ``augment`` None or count 0 the augmented arm is the baseline arm
    (same seed, same data, deterministic training), so its metrics are
    reused rather than recomputed.
    """
    if augment is not None:
        augment.validate()
    classifier_params = dict(classifier_params or {})
    plan: FoldPlan = stratified_kfold(dataset.labels, k, seed)
    n_classes = len(dataset.class_names)
    want_augment = augment is not None and augment.count > 0

    if want_augment:
        for fold_id in range(k):
            train_idx = plan.train_indices(fold_id)
            n_rare = int((dataset.labels[train_idx] == rare_class).sum())
            if n_rare < 2:
                raise ValueError(
                    f"fold {fold_id} has {n_rare} rare-class training images; "
                    "interpolation needs at least 2"
                )

    records: list[FoldRecord] = []
    for fold_id in range(k):
        train_idx = plan.train_indices(fold_id)
        test_idx = plan.test_indices(fold_id)
        clf_seed = derive_seed(seed, f"fold{fold_id}", "classifier")

        # one validation subset of real images, shared by both arms so that
        # early stopping sees the same data either way
        fit_part, val_part = stratified_split(
            dataset.labels[train_idx],
            (1.0 - VAL_FRACTION, VAL_FRACTION),
            derive_seed(seed, f"fold{fold_id}", "val"),
        )
        fit_idx, val_idx = train_idx[fit_part], train_idx[val_part]
        val = (dataset.images[val_idx], dataset.labels[val_idx])

        base_clf = _fit_arm(
            dataset.images[fit_idx], dataset.labels[fit_idx], val, clf_seed, classifier_params
        )
        base_scores = evaluate_predictions(
            dataset.labels[test_idx], base_clf.predict(dataset.images[test_idx]), n_classes
        )

        if want_augment:
            rare_train = train_idx[dataset.labels[train_idx] == rare_class]
            flow = train_fold_flow(dataset, rare_train, augment, seed, fold_id)
            aug_set = augment_fold(dataset, flow, rare_train, augment, seed, fold_id)
            images = np.concatenate([dataset.images[fit_idx], aug_set.images])
            labels = np.concatenate(
                [dataset.labels[fit_idx], np.full(augment.count, rare_class, dtype=np.int64)]
            )
            aug_clf = _fit_arm(images, labels, val, clf_seed, classifier_params)
            aug_scores = evaluate_predictions(
                dataset.labels[test_idx], aug_clf.predict(dataset.images[test_idx]), n_classes
            )
            flow_train_indices = rare_train
            provenance = aug_set.provenance
        else:
            aug_scores = base_scores
            flow_train_indices = np.array([], dtype=np.int64)
            provenance = []

        records.append(
            FoldRecord(
                fold_id=fold_id,
                train_indices=train_idx,
                test_indices=test_idx,
                flow_train_indices=flow_train_indices,
                provenance=provenance,
                baseline=base_scores,
                augmented=aug_scores,
            )
        )

    deltas = np.array(
        [r.augmented.f1[rare_class] - r.baseline.f1[rare_class] for r in records]
    )
    return CrossValResult(
        baseline=aggregate_scores([r.baseline for r in records]),
        augmented=aggregate_scores([r.augmented for r in records]),
        records=records,
        rare_class=rare_class,
        rare_f1_deltas=deltas,
        delta_mean=float(deltas.mean()),
        delta_median=float(np.median(deltas)),
        p_value=sign_test_p(deltas),
    )


def audit_leakage(result: CrossValResult) -> int:
    """Assert that no fold's training artifacts touch its test indices.

    Checks, per fold: classifier training indices, flow training indices,
    and both source ids of every synthetic image. Returns the number of
    intersection checks performed; raises AssertionError on any overlap.
    """
    checks = 0
    for record in result.records:
        test = set(record.test_indices.tolist())
        for name, indices in (
            ("classifier train", record.train_indices.tolist()),
            ("flow train", record.flow_train_indices.tolist()),
            ("augmentation sources", [p.source_a for p in record.provenance]),
            ("augmentation sources", [p.source_b for p in record.provenance]),
        ):
            overlap = test.intersection(indices)
            assert not overlap, (
                f"fold {record.fold_id}: {name} leaks test indices {sorted(overlap)[:5]}"
            )
            checks += 1
    return checks


def write_metrics_csv(path, result: CrossValResult, class_names) -> None:
    """One row per (fold, class, arm) with precision, recall, and F1."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "class", "precision", "recall", "f1", "arm"])
        for record in result.records:
            for arm, scores in (("baseline", record.baseline), ("augmented", record.augmented)):
                for c, name in enumerate(class_names):
                    writer.writerow(
                        [
                            record.fold_id,
                            name,
                            f"{scores.precision[c]:.6f}",
                            f"{scores.recall[c]:.6f}",
                            f"{scores.f1[c]:.6f}",
                            arm,
                        ]
                    )


def write_summary_csv(path, result: CrossValResult, class_names) -> None:
    """Cross-fold mean +- sd per class and arm, plus the paired statistics."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "class", "precision_mean", "precision_sd",
                         "recall_mean", "recall_sd", "f1_mean", "f1_sd"])
        for arm, metrics in (("baseline", result.baseline), ("augmented", result.augmented)):
            for c, name in enumerate(class_names):
                writer.writerow(
                    [
                        arm,
                        name,
                        f"{metrics.precision_mean[c]:.6f}",
                        f"{metrics.precision_sd[c]:.6f}",
                        f"{metrics.recall_mean[c]:.6f}",
                        f"{metrics.recall_sd[c]:.6f}",
                        f"{metrics.f1_mean[c]:.6f}",
                        f"{metrics.f1_sd[c]:.6f}",
                    ]
                )
        writer.writerow([])
        writer.writerow(["rare_f1_delta_mean", f"{result.delta_mean:.6f}"])
        writer.writerow(["rare_f1_delta_median", f"{result.delta_median:.6f}"])
        writer.writerow(["sign_test_p", f"{result.p_value:.6f}"])
