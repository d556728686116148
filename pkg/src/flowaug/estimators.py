"""Scikit-learn style wrappers around the flow and the oversampler.

`FlowDensityEstimator` exposes fit/transform/inverse_transform over the
bijection plus score_samples and sample; `LatentInterpolationOversampler`
exposes the imbalanced-learn style fit_resample. Both keep constructor
arguments verbatim so `clone` and `get_params` behave.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .augment import InterpolationSpec, generate_augmentations
from .core import derive_seed, make_rng
from .flows import FlowConfig, LatentCode, MultiScaleFlow
from .training import Dequantizer, TrainConfig
from .training import fit as fit_flow
from .validation import check_images, check_labels


class FlowDensityEstimator(BaseEstimator):
    """Exact-likelihood density model over BHWC images on the unit interval.

    `transform` maps images to flat latent vectors, `inverse_transform`
    maps them back (a bijection, so the round-trip is the identity up to
    float error), `score_samples` returns per-image log-density in nats.
    """

    def __init__(
        self,
        *,
        levels: int = 2,
        steps_per_level: int = 4,
        filters: int = 32,
        attention: str = "last",
        attention_heads: int = 4,
        epochs: int = 50,
        batch_size: int = 32,
        warmup_steps: int = 500,
        max_lr: float = 1e-3,
        gradient_clip_norm: float = 50.0,
        dequantize: bool = True,
        seed: int = 0,
    ):
        self.levels = levels
        self.steps_per_level = steps_per_level
        self.filters = filters
        self.attention = attention
        self.attention_heads = attention_heads
        self.epochs = epochs
        self.batch_size = batch_size
        self.warmup_steps = warmup_steps
        self.max_lr = max_lr
        self.gradient_clip_norm = gradient_clip_norm
        self.dequantize = dequantize
        self.seed = seed

    def _flow_config(self) -> FlowConfig:
        return FlowConfig(
            levels=self.levels,
            steps_per_level=self.steps_per_level,
            filters=self.filters,
            attention=self.attention,
            attention_heads=self.attention_heads,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            warmup_steps=self.warmup_steps,
            max_lr=self.max_lr,
            gradient_clip_norm=self.gradient_clip_norm,
            seed=derive_seed(self.seed, "train"),
        )

    def fit(self, X, y=None):
        X = check_images(X, name="X")
        self.input_shape_ = X.shape[1:]
        self.flow_ = MultiScaleFlow(
            self._flow_config(), self.input_shape_, seed=derive_seed(self.seed, "init")
        )
        dequantizer = Dequantizer() if self.dequantize else None
        self.history_ = fit_flow(self.flow_, X, self._train_config(), dequantizer=dequantizer)
        return self

    def _checked(self, X) -> np.ndarray:
        check_is_fitted(self, "flow_")
        X = check_images(X, name="X")
        if X.shape[1:] != self.input_shape_:
            raise ValueError(
                f"expected images shaped (*, {self.input_shape_}), got {X.shape}"
            )
        return X

    def transform(self, X) -> np.ndarray:
        from .augment import encode

        X = self._checked(X)
        return encode(self.flow_, X).to_flat()

    def inverse_transform(self, Z) -> np.ndarray:
        check_is_fitted(self, "flow_")
        from .augment import decode

        Z = np.asarray(Z, dtype=np.float64)
        code = LatentCode.from_flat(Z, list(self.flow_.latent_shapes))
        return decode(self.flow_, code)

    def score_samples(self, X) -> np.ndarray:
        from .core import Tensor

        X = self._checked(X)
        out = []
        for start in range(0, X.shape[0], 64):
            out.append(self.flow_.log_prob(Tensor(X[start : start + 64])).data)
        return np.concatenate(out)

    def score(self, X, y=None) -> float:
        return float(self.score_samples(X).mean())

    def sample(self, n: int, temperature: float = 1.0, seed: int | None = None) -> np.ndarray:
        check_is_fitted(self, "flow_")
        rng = make_rng(self.seed if seed is None else seed, "sample")
        return self.flow_.sample(n, rng, temperature)


class LatentInterpolationOversampler(BaseEstimator):
    """Rebalance a labeled image set with flow-interpolated synthetic samples.

    Trains a density model on the target class only, then decodes latent
    mixes of same-class pairs. `fit_resample` returns the input plus the
    synthetic block; `provenance_` records each synthetic image's two
    source row indices and mixing weight.
    """

    def __init__(
        self,
        *,
        target_class: int | None = None,
        count: int | None = None,
        mode: str = "spherical",
        t_low: float = 0.35,
        t_high: float = 0.65,
        temperature: float = 1.0,
        levels: int = 2,
        steps_per_level: int = 4,
        filters: int = 32,
        attention: str = "last",
        attention_heads: int = 4,
        epochs: int = 40,
        batch_size: int = 32,
        warmup_steps: int = 100,
        max_lr: float = 1e-3,
        seed: int = 0,
    ):
        self.target_class = target_class
        self.count = count
        self.mode = mode
        self.t_low = t_low
        self.t_high = t_high
        self.temperature = temperature
        self.levels = levels
        self.steps_per_level = steps_per_level
        self.filters = filters
        self.attention = attention
        self.attention_heads = attention_heads
        self.epochs = epochs
        self.batch_size = batch_size
        self.warmup_steps = warmup_steps
        self.max_lr = max_lr
        self.seed = seed

    def _spec(self) -> InterpolationSpec:
        return InterpolationSpec(
            mode=self.mode,
            t_low=self.t_low,
            t_high=self.t_high,
            temperature=self.temperature,
        )

    def fit_resample(self, X, y) -> tuple[np.ndarray, np.ndarray]:
        X = check_images(X, name="X")
        y = check_labels(y, X.shape[0], name="y")
        self._spec().validate()
        counts = np.bincount(y)
        if self.target_class is None:
            present = np.flatnonzero(counts)
            target = int(present[np.argmin(counts[present])])
        else:
            target = int(self.target_class)
            if target < 0 or target >= counts.size or counts[target] == 0:
                raise ValueError(f"target_class {target} has no samples")
        count = int(counts.max() - counts[target]) if self.count is None else int(self.count)

        source_rows = np.flatnonzero(y == target)
        estimator = FlowDensityEstimator(
            levels=self.levels,
            steps_per_level=self.steps_per_level,
            filters=self.filters,
            attention=self.attention,
            attention_heads=self.attention_heads,
            epochs=self.epochs,
            batch_size=self.batch_size,
            warmup_steps=self.warmup_steps,
            max_lr=self.max_lr,
            seed=derive_seed(self.seed, "flow"),
        ).fit(X[source_rows])
        augmentation = generate_augmentations(
            estimator.flow_,
            X[source_rows],
            count,
            self._spec(),
            make_rng(self.seed, "oversample"),
            source_ids=source_rows,
        )

        self.estimator_ = estimator
        self.target_class_ = target
        self.provenance_ = augmentation.provenance
        X_res = np.concatenate([X, augmentation.images])
        y_res = np.concatenate([y, np.full(count, target, dtype=y.dtype)])
        return X_res, y_res
