"""Fashion-MNIST IDX ingestion.

IDX layout: 4-byte big-endian magic (0x00000803 images, 0x00000801 labels), one
big-endian uint32 per dimension, then the unsigned-byte payload.
"""

import gzip
import os
import struct
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_DIR_ENV = "WPNN_DATA_DIR"

FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
EXPECTED_COUNTS = {"train": 60_000, "test": 10_000}


class IdxParseError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _parse(data, magic, ndim):
    data = bytes(data)
    if len(data) < 4:
        raise IdxParseError("truncated header", len(data))
    (found,) = struct.unpack_from(">I", data, 0)
    if found != magic:
        raise IdxParseError(f"bad magic 0x{found:08x}, expected 0x{magic:08x}", 0)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxParseError("truncated dimension table", len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    size = int(np.prod(dims, dtype=np.int64))
    if len(data) < header + size:
        raise IdxParseError(f"truncated payload: need {size} bytes", len(data))
    if len(data) > header + size:
        raise IdxParseError("trailing bytes after payload", header + size)
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def parse_idx_images(data):
    """uint8 array of shape (count, rows, cols)."""
    return _parse(data, IMAGE_MAGIC, 3)


def parse_idx_labels(data, num_classes=10):
    labels = _parse(data, LABEL_MAGIC, 1)
    bad = np.flatnonzero(labels >= num_classes)
    if bad.size:
        raise IdxParseError(f"label {labels[bad[0]]} out of range", 8 + int(bad[0]))
    return labels


def serialize_idx_images(images):
    images = np.asarray(images, dtype=np.uint8)
    return struct.pack(">4I", IMAGE_MAGIC, *images.shape) + images.tobytes()


def serialize_idx_labels(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">2I", LABEL_MAGIC, len(labels)) + labels.tobytes()


def normalize(image_bytes):
    return np.asarray(image_bytes, dtype=np.float64) / 255.0


def _read(path):
    for candidate in (path, path.with_name(path.name + ".gz")):
        if candidate.exists():
            raw = candidate.read_bytes()
            return gzip.decompress(raw) if candidate.suffix == ".gz" else raw
    raise FileNotFoundError(path)


def default_data_dir():
    return os.environ.get(DATA_DIR_ENV)


def expected_paths(data_dir, split):
    return [Path(data_dir) / name for name in FILES[split]]


def load_split(data_dir, split, limit=None):
    """``(pixels in [0, 1] of shape (n, H, W), labels)`` for ``split`` in {"train", "test"}."""
    if data_dir is None:
        raise FileNotFoundError(f"no data directory given and ${DATA_DIR_ENV} is unset")
    img_path, lbl_path = expected_paths(data_dir, split)
    try:
        images = parse_idx_images(_read(img_path))
        labels = parse_idx_labels(_read(lbl_path))
    except FileNotFoundError:
        names = ", ".join(str(p) for p in expected_paths(data_dir, split))
        raise FileNotFoundError(f"{split} split not found; expected {names} (optionally .gz)") from None
    if len(images) != len(labels):
        raise ValueError(f"{split}: {len(images)} images but {len(labels)} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return normalize(images), labels.astype(np.int64)


def write_split(data_dir, split, images, labels):
    """Write uint8 images and labels as IDX files (used for fixtures)."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    img_path, lbl_path = expected_paths(data_dir, split)
    img_path.write_bytes(serialize_idx_images(images))
    lbl_path.write_bytes(serialize_idx_labels(labels))
