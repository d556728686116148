"""Normalizing-flow oversampling for imbalanced image classification.

The package trains an exact-likelihood bijective flow, synthesizes
rare-class images by interpolating in its latent space, and measures the
effect with a leakage-audited paired cross-validation harness.
"""

from .augment import (
    AugmentationSet,
    InterpolationSpec,
    Provenance,
    generate_augmentations,
    interpolate,
)
from .estimators import FlowDensityEstimator, LatentInterpolationOversampler
from .flows import FlowConfig, LatentCode, MultiScaleFlow
from .training import Dequantizer, LossReport, TrainConfig, TrainingDiverged, fit
from .validation import check_images, check_labels

__version__ = "0.1.0"

__all__ = [
    "AugmentationSet",
    "InterpolationSpec",
    "Provenance",
    "generate_augmentations",
    "interpolate",
    "FlowDensityEstimator",
    "LatentInterpolationOversampler",
    "FlowConfig",
    "LatentCode",
    "MultiScaleFlow",
    "Dequantizer",
    "LossReport",
    "TrainConfig",
    "TrainingDiverged",
    "fit",
    "check_images",
    "check_labels",
    "__version__",
]
