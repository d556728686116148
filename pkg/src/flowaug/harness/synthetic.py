"""Synthetic seismic-style trace images with three quality grades.

Every image shows a handful of hyperbolic reflection events painted with a
Ricker-like wavelet. Quality degrades through class-specific noise: vertical
low-frequency swell bands, isolated amplitude spikes, and dead (flat) trace
columns. Values land on the 1/256 pixel grid in [0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import make_rng

CLASS_NAMES = ("good", "medium", "bad")

GRID = 1.0 / 256.0


@dataclass
class ClassNoise:
    """Noise recipe for one quality grade."""

    background: float
    swell_columns: float
    swell_amplitude: float
    spike_rate: float
    dead_trace_prob: float


@dataclass
class SyntheticSeismoConfig:
    size: int = 32
    total: int = 3000
    ratios: tuple[float, float, float] = (0.70, 0.22, 0.08)
    good: ClassNoise = field(
        default_factory=lambda: ClassNoise(0.02, 0.3, 0.10, 0.0, 0.0)
    )
    medium: ClassNoise = field(
        default_factory=lambda: ClassNoise(0.03, 4.0, 0.24, 0.0010, 0.015)
    )
    bad: ClassNoise = field(
        default_factory=lambda: ClassNoise(0.04, 6.0, 0.38, 0.0025, 0.05)
    )
    seed: int = 0

    def validate(self) -> None:
        if self.size < 8 or self.size & (self.size - 1):
            raise ValueError(f"size must be a power of two >= 8, got {self.size}")
        if self.total < 1:
            raise ValueError(f"total must be positive, got {self.total}")
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ValueError(f"need three positive class ratios, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"class ratios must sum to 1, got {self.ratios}")
        if self.ratios[2] >= min(self.ratios[0], self.ratios[1]):
            raise ValueError(f"'bad' must be the strict minority, got ratios {self.ratios}")

    def noise_for(self, label: int) -> ClassNoise:
        return (self.good, self.medium, self.bad)[label]


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...] = CLASS_NAMES
    # optional split bookkeeping, e.g. {"train": indices, "test": indices}
    tags: dict[str, np.ndarray] | None = None

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.class_names))


def class_counts(ratios, total: int) -> list[int]:
    """Exact per-class counts by largest remainder, summing to total."""
    raw = [r * total for r in ratios]
    counts = [int(math.floor(v)) for v in raw]
    remainders = [v - c for v, c in zip(raw, counts)]
    for _ in range(total - sum(counts)):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    return counts


def _trace_image(rng: np.random.Generator, size: int, noise: ClassNoise) -> np.ndarray:
    t = np.arange(size, dtype=np.float64)[:, None]
    x = np.arange(size, dtype=np.float64)[None, :]
    img = np.zeros((size, size))

    for _ in range(int(rng.integers(3, 6))):
        t0 = rng.uniform(0.10, 0.85) * size
        v = rng.uniform(1.5, 4.0)
        amp = rng.uniform(0.35, 0.70) * rng.choice([-1.0, 1.0])
        width = rng.uniform(0.8, 1.6)
        curve = np.sqrt(t0**2 + ((x - size / 2.0) / v) ** 2)
        d = (t - curve) / width
        img += amp * (1.0 - d * d) * np.exp(-0.5 * d * d)

    img += rng.normal(scale=noise.background, size=(size, size))

    for _ in range(int(rng.poisson(noise.swell_columns))):
        col = int(rng.integers(0, size))
        freq = rng.uniform(0.02, 0.08)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amp = noise.swell_amplitude * rng.uniform(0.8, 1.2)
        band = amp * np.sin(2.0 * math.pi * freq * t[:, 0] + phase)
        img[:, col] += band
        if col + 1 < size:
            img[:, col + 1] += 0.5 * band

    if noise.spike_rate > 0:
        n_spikes = int(rng.binomial(size * size, noise.spike_rate))
        if n_spikes:
            pos = rng.choice(size * size, size=n_spikes, replace=False)
            signs = rng.choice([-1.0, 1.0], size=n_spikes)
            img.ravel()[pos] += signs * rng.uniform(1.2, 2.0, size=n_spikes)

    if noise.dead_trace_prob > 0:
        dead = rng.uniform(size=size) < noise.dead_trace_prob
        img[:, dead] = 0.0

    pixels = np.clip(0.5 + 0.45 * img, 0.0, 255.0 * GRID)
    return np.round(pixels / GRID) * GRID


def generate_synthetic_dataset(config: SyntheticSeismoConfig) -> LabeledDataset:
    """Exact per-ratio class counts; bit-identical for a fixed seed."""
    config.validate()
    counts = class_counts(config.ratios, config.total)
    images = np.empty((config.total, config.size, config.size, 1))
    labels = np.empty(config.total, dtype=np.int64)
    i = 0
    for label, count in enumerate(counts):
        noise = config.noise_for(label)
        for j in range(count):
            rng = make_rng(config.seed, "data", f"class{label}", f"img{j}")
            images[i, :, :, 0] = _trace_image(rng, config.size, noise)
            labels[i] = label
            i += 1
    order = make_rng(config.seed, "data", "order").permutation(config.total)
    return LabeledDataset(images=images[order], labels=labels[order])
