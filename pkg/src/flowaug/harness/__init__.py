from .synthetic import (
    CLASS_NAMES,
    GRID,
    ClassNoise,
    LabeledDataset,
    SyntheticSeismoConfig,
    class_counts,
    generate_synthetic_dataset,
)
from .folds import FoldPlan, stratified_kfold, stratified_split
from .metrics import (
    ClassMetrics,
    ClassScores,
    aggregate_scores,
    confusion_matrix,
    evaluate,
    evaluate_predictions,
    sign_test_p,
)
from .classifier import ConvNetClassifier
from .crossval import (
    AugmentRecipe,
    CrossValResult,
    FoldRecord,
    audit_leakage,
    cross_validate,
    write_metrics_csv,
    write_summary_csv,
)
from .sweep import (
    SweepResult,
    augmentation_size_sweep,
    recommend_size,
    write_sweep_csv,
    write_sweep_plot,
)

__all__ = [
    "CLASS_NAMES",
    "GRID",
    "ClassNoise",
    "LabeledDataset",
    "SyntheticSeismoConfig",
    "class_counts",
    "generate_synthetic_dataset",
    "FoldPlan",
    "stratified_kfold",
    "stratified_split",
    "ClassMetrics",
    "ClassScores",
    "aggregate_scores",
    "confusion_matrix",
    "evaluate",
    "evaluate_predictions",
    "sign_test_p",
    "ConvNetClassifier",
    "AugmentRecipe",
    "CrossValResult",
    "FoldRecord",
    "audit_leakage",
    "cross_validate",
    "write_metrics_csv",
    "write_summary_csv",
    "SweepResult",
    "augmentation_size_sweep",
    "recommend_size",
    "write_sweep_csv",
    "write_sweep_plot",
]
