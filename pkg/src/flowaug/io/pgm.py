"""Binary PGM (P5) image files and CSV dataset manifests.

Images are single-channel floats on the 1/256 pixel grid, so the 8-bit
integer file is lossless: byte k encodes pixel value k/256. Writes go
through a temp file and rename, so readers never see partial files.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile

import numpy as np

from ..harness.synthetic import CLASS_NAMES, GRID, LabeledDataset

_MAXVAL = 255


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_pgm(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        if image.shape[2] != 1:
            raise ValueError(f"PGM holds one channel, got shape {image.shape}")
        image = image[..., 0]
    if image.ndim != 2:
        raise ValueError(f"expected a single 2-d image, got shape {image.shape}")
    ticks = np.round(image / GRID)
    if ticks.min() < 0 or ticks.max() > _MAXVAL:
        raise ValueError("pixel values fall outside [0, 255/256]")
    h, w = image.shape
    header = f"P5\n{w} {h}\n{_MAXVAL}\n".encode("ascii")
    return header + ticks.astype(np.uint8).tobytes()


def write_pgm(path, image: np.ndarray) -> None:
    atomic_write_bytes(path, encode_pgm(image))


def _read_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` whitespace-separated header tokens, skipping comments;
    returns them with the offset just past the single whitespace byte that
    terminates the last one."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated PGM header")
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            start = i
            while i < len(data) and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
                i += 1
            tokens.append(data[start:i])
    if i >= len(data) or not data[i : i + 1].isspace():
        raise ValueError("truncated PGM header")
    return tokens, i + 1


def read_pgm(path) -> np.ndarray:
    """Read one P5 file back to a (H, W, 1) float array on the pixel grid."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM file: magic {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != _MAXVAL:
        raise ValueError(f"expected maxval {_MAXVAL}, got {maxval}")
    payload = data[offset : offset + w * h]
    if len(payload) != w * h:
        raise ValueError(f"expected {w * h} pixel bytes, got {len(payload)}")
    ticks = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    return (ticks.astype(np.float64) * GRID)[..., None]


def sample_sheet(images: np.ndarray, columns: int = 8, pad: int = 2) -> np.ndarray:
    """Tile a batch into one image for quick visual inspection."""
    images = np.asarray(images, dtype=np.float64)
    n, h, w = images.shape[:3]
    columns = min(columns, n)
    rows = math.ceil(n / columns)
    sheet = np.zeros((rows * (h + pad) - pad, columns * (w + pad) - pad, 1))
    for i in range(n):
        r, c = divmod(i, columns)
        sheet[r * (h + pad) : r * (h + pad) + h, c * (w + pad) : c * (w + pad) + w] = images[
            i
        ].reshape(h, w, 1)
    return sheet


def save_dataset(directory, dataset: LabeledDataset) -> None:
    """One PGM per image plus a manifest.csv of (path, label) rows."""
    os.makedirs(directory, exist_ok=True)
    rows = []
    for i, (image, label) in enumerate(zip(dataset.images, dataset.labels)):
        name = f"img_{i:05d}.pgm"
        write_pgm(os.path.join(directory, name), image)
        rows.append((name, int(label)))
    out = [["path", "label"]] + [[name, str(label)] for name, label in rows]
    text = "\n".join(",".join(r) for r in out) + "\n"
    atomic_write_bytes(os.path.join(directory, "manifest.csv"), text.encode("ascii"))


def load_dataset(directory) -> LabeledDataset:
    manifest = os.path.join(directory, "manifest.csv")
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"no manifest.csv in {directory}")
    images = []
    labels = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            images.append(read_pgm(os.path.join(directory, row["path"])))
            labels.append(int(row["label"]))
    if not images:
        raise ValueError(f"manifest in {directory} lists no images")
    return LabeledDataset(
        images=np.stack(images), labels=np.array(labels, dtype=np.int64), class_names=CLASS_NAMES
    )
