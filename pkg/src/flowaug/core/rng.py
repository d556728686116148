"""Deterministic random-number streams.

All randomness in the package flows through PCG64 generators derived from a
64-bit run seed plus a string path (e.g. ``make_rng(seed, "train", "shuffle")``).
The derivation hashes the path with SHA-256, so the same (seed, path) pair
yields a bit-identical stream on every platform and Python version.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["make_rng", "derive_seed"]


def derive_seed(seed: int, *path: str) -> int:
    """Stable 128-bit child seed for the given purpose path."""
    tag = f"{seed}:" + "/".join(path)
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:16], "little")


def make_rng(seed: int, *path: str) -> np.random.Generator:
    """PCG64 generator for one purpose; identical inputs give identical streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(derive_seed(seed, *path))))
