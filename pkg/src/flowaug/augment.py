"""Synthetic rare-class samples by interpolating in the flow's latent space."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import Tensor
from .flows.model import LatentCode, MultiScaleFlow

_MODES = ("linear", "spherical")

_CHUNK = 64


@dataclass
class InterpolationSpec:
    """How synthetic samples are mixed from source pairs.

    t is drawn uniformly from the open interval (t_low, t_high), strictly
    inside (0, 1) so outputs never duplicate a training image. temperature
    scales latent codes wherever they are formed: the prior draw in pure
    sampling, and the mixed code in interpolation (values below 1 pull
    synthetic samples toward the manifold's smoother core).
    """

    mode: str = "linear"
    t_low: float = 0.2
    t_high: float = 0.8
    temperature: float = 1.0

    def validate(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not (0.0 < self.t_low < self.t_high < 1.0):
            raise ValueError(
                f"t range ({self.t_low}, {self.t_high}) must be an open interval inside (0, 1)"
            )
        if self.temperature < 0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")


@dataclass
class Provenance:
    """Where one synthetic image came from: source ids, mixing weight, and
    the cross-validation fold it was generated for (-1 outside any fold)."""

    source_a: int
    source_b: int
    t: float
    fold_id: int


@dataclass
class AugmentationSet:
    images: np.ndarray
    provenance: list[Provenance]


def encode(model: MultiScaleFlow, x: np.ndarray) -> LatentCode:
    """Data to latent parts, chunked to keep activation memory bounded."""
    x = np.asarray(x, dtype=np.float64)
    parts_per_chunk = []
    for start in range(0, x.shape[0], _CHUNK):
        latent, _ = model.forward(Tensor(x[start : start + _CHUNK]))
        parts_per_chunk.append([p.data for p in latent.parts])
    parts = [np.concatenate(chunks, axis=0) for chunks in zip(*parts_per_chunk)]
    return LatentCode(parts=parts, shapes=list(model.latent_shapes))


def decode(model: MultiScaleFlow, latent: LatentCode) -> np.ndarray:
    """Latent parts back to data space; exact inverse of encode."""
    return model.inverse(latent)


def sample(
    model: MultiScaleFlow, n: int, temperature: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw n images from the prior at the given temperature."""
    return model.sample(n, rng, temperature)


def _slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation of two same-shape arrays, treated as vectors.
    Falls back to linear when the angle between them degenerates."""
    af = a.ravel()
    bf = b.ravel()
    denom = float(np.linalg.norm(af) * np.linalg.norm(bf))
    if denom == 0.0:
        return (1.0 - t) * a + t * b
    cos = float(np.clip(np.dot(af, bf) / denom, -1.0, 1.0))
    omega = math.acos(cos)
    if omega < 1e-6 or math.pi - omega < 1e-6:
        return (1.0 - t) * a + t * b
    return (math.sin((1.0 - t) * omega) * a + math.sin(t * omega) * b) / math.sin(omega)


def _mix_parts(
    parts: list[np.ndarray], ia: int, ib: int, t: float, mode: str, temperature: float = 1.0
) -> list[np.ndarray]:
    if mode == "linear":
        mixed = [(1.0 - t) * p[ia] + t * p[ib] for p in parts]
    else:
        mixed = [_slerp(p[ia], p[ib], t) for p in parts]
    if temperature != 1.0:
        mixed = [temperature * m for m in mixed]
    return mixed


def interpolate(
    model: MultiScaleFlow, x_a: np.ndarray, x_b: np.ndarray, t: float, mode: str = "linear"
) -> np.ndarray:
    """Decode the latent mix of two images: elementwise (1-t)*z_a + t*z_b in
    linear mode, per-part spherical interpolation otherwise."""
    if not (0.0 < t < 1.0):
        raise ValueError(f"t must lie strictly inside (0, 1), got {t}")
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    pair = np.stack([np.asarray(x_a, dtype=np.float64), np.asarray(x_b, dtype=np.float64)])
    parts = [p for p in encode(model, pair).parts]
    mixed = [p[None] for p in _mix_parts(parts, 0, 1, t, mode)]
    return decode(model, LatentCode(parts=mixed, shapes=list(model.latent_shapes)))[0]


def quantize_to_grid(x: np.ndarray, grid: float, levels: int = 256) -> np.ndarray:
    """Clamp to the valid pixel range and snap to the discretization grid."""
    ticks = np.clip(np.round(x / grid), 0, levels - 1)
    return ticks * grid


def generate_augmentations(
    model: MultiScaleFlow,
    images: np.ndarray,
    count: int,
    spec: InterpolationSpec,
    rng: np.random.Generator,
    *,
    source_ids: np.ndarray | None = None,
    fold_id: int = -1,
    grid: float | None = 1.0 / 256.0,
) -> AugmentationSet:
    """Make `count` synthetic images from same-class sources.

    Pairs are drawn without replacement within a round (a shuffled pass over
    the sources) and the sources reshuffle between rounds. Every output gets
    provenance (source ids, t, fold id); ids default to positions in
    `images` but callers tracking a larger dataset can pass their own. With
    `grid` set, outputs are clamped and requantized to that pixel grid.
    """
    spec.validate()
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 source images to interpolate, got {n}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if source_ids is None:
        source_ids = np.arange(n)
    else:
        source_ids = np.asarray(source_ids)
        if source_ids.shape != (n,):
            raise ValueError(f"source_ids must have one id per image, got shape {source_ids.shape}")
    if count == 0:
        return AugmentationSet(images=np.zeros((0, *images.shape[1:])), provenance=[])

    parts = [p for p in encode(model, images).parts]
    picked: list[tuple[int, int, float]] = []
    seen: set[tuple[int, int, float]] = set()
    while len(picked) < count:
        order = rng.permutation(n)
        for k in range(0, n - 1, 2):
            if len(picked) == count:
                break
            ia, ib = int(order[k]), int(order[k + 1])
            t = float(rng.uniform(spec.t_low, spec.t_high))
            while (ia, ib, t) in seen:
                t = float(rng.uniform(spec.t_low, spec.t_high))
            seen.add((ia, ib, t))
            picked.append((ia, ib, t))

    outputs = []
    for start in range(0, count, _CHUNK):
        chunk = picked[start : start + _CHUNK]
        mixed = [
            np.stack(per_part)
            for per_part in zip(
                *(_mix_parts(parts, ia, ib, t, spec.mode, spec.temperature) for ia, ib, t in chunk)
            )
        ]
        outputs.append(decode(model, LatentCode(parts=mixed, shapes=list(model.latent_shapes))))
    synthetic = np.concatenate(outputs, axis=0)
    if grid is not None:
        synthetic = quantize_to_grid(synthetic, grid)
    provenance = [
        Provenance(int(source_ids[ia]), int(source_ids[ib]), t, fold_id) for ia, ib, t in picked
    ]
    return AugmentationSet(images=synthetic, provenance=provenance)


def write_provenance(path, augmentation: AugmentationSet) -> None:
    """Persist provenance as CSV rows (source_a, source_b, t, fold_id)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_a", "source_b", "t", "fold_id"])
        for p in augmentation.provenance:
            writer.writerow([p.source_a, p.source_b, f"{p.t:.12g}", p.fold_id])
