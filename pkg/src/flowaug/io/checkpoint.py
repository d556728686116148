"""Binary model checkpoints with architecture digests and checksums.

Layout, all integers little-endian: 8-byte magic, format version u32,
32-byte SHA-256 of the architecture signature, actnorm-initialized flag
u8, parameter count u32, then per parameter: name length u32, name bytes,
rank u32, extents u32 each, float64 payload; finally CRC-32 of everything
before it as u32. Loading verifies magic, version, digest, names, shapes,
and checksum, so a checkpoint never silently loads into the wrong
architecture.
"""

from __future__ import annotations

import hashlib
import struct
import zlib

import numpy as np

from ..flows import MultiScaleFlow
from .pgm import atomic_write_bytes

MAGIC = b"FLOWCKPT"
VERSION = 1


def architecture_signature(model: MultiScaleFlow) -> str:
    """Canonical description of everything that fixes parameter layout."""
    c = model.config
    return (
        f"levels={c.levels};steps_per_level={c.steps_per_level};filters={c.filters};"
        f"attention={c.attention};attention_heads={c.attention_heads};squeeze={c.squeeze};"
        f"input_shape={tuple(model.input_shape)}"
    )


def _digest(model: MultiScaleFlow) -> bytes:
    return hashlib.sha256(architecture_signature(model).encode("ascii")).digest()


def save_checkpoint(path, model: MultiScaleFlow) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION), _digest(model)]
    chunks.append(struct.pack("<B", 1 if model.initialized else 0))
    params = model.parameters()
    chunks.append(struct.pack("<I", len(params)))
    for p in params:
        name = p.name.encode("utf-8")
        value = np.ascontiguousarray(p.data, dtype="<f8")
        chunks.append(struct.pack("<I", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<I", value.ndim))
        chunks.append(struct.pack(f"<{value.ndim}I", *value.shape))
        chunks.append(value.tobytes())
    body = b"".join(chunks)
    atomic_write_bytes(path, body + struct.pack("<I", zlib.crc32(body)))


class CheckpointError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, model: MultiScaleFlow) -> MultiScaleFlow:
    """Restore parameters in place; the model must match the checkpoint's
    architecture digest exactly."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise CheckpointError("checkpoint truncated")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch")

    reader = _Reader(body)
    if reader.take(8) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = reader.take(32)
    if digest != _digest(model):
        raise CheckpointError(
            "architecture mismatch: checkpoint was saved from a different model "
            f"(expected signature {architecture_signature(model)!r})"
        )
    initialized = reader.take(1)[0] == 1

    params = model.parameters()
    count = reader.u32()
    if count != len(params):
        raise CheckpointError(f"checkpoint has {count} parameters, model has {len(params)}")
    for p in params:
        name = reader.take(reader.u32()).decode("utf-8")
        if name != p.name:
            raise CheckpointError(f"parameter order mismatch: {name!r} vs model {p.name!r}")
        rank = reader.u32()
        shape = tuple(reader.u32() for _ in range(rank))
        if shape != p.data.shape:
            raise CheckpointError(f"parameter {name} shaped {shape}, model has {p.data.shape}")
        payload = reader.take(8 * int(np.prod(shape, dtype=np.int64)))
        p.data = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    if reader.offset != len(body):
        raise CheckpointError(f"{len(body) - reader.offset} trailing bytes after parameters")

    for steps in model.levels:
        for step in steps:
            step.actnorm.initialized = initialized
    return model
