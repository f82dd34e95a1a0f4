"""MNIST IDX reading/writing, per-class subsets and the 3x3 pattern task.

The loader never downloads anything: point it at a directory holding the
four standard IDX files (optionally gzipped).
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    n_classes: int

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("label outside [0, n_classes)")

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.images[index], self.labels[index], self.n_classes)


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, magic: int, ndim: int, path) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header != size:
        raise IdxFormatError(f"{path}: expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int = 10) -> Dataset:
    """Read an IDX image/label pair; pixels are scaled to [0, 1]."""
    images = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, 3, images_path)
    labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, 1, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(flat, labels.astype(np.int64), n_classes)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images (n, rows, cols) and labels (n,) in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must have shape (n, rows, cols)")
    for path, magic, arr in ((images_path, IMAGES_MAGIC, images), (labels_path, LABELS_MAGIC, labels)):
        raw = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()
        path = Path(path)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "wb") as fh:
            fh.write(raw)


def _find(data_dir: Path, name: str) -> Path:
    for candidate in (data_dir / name, data_dir / f"{name}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{name}[.gz] not found in {data_dir}")


def load_mnist(data_dir) -> tuple[Dataset, Dataset]:
    data_dir = Path(data_dir)
    out = []
    for split in ("train", "test"):
        img, lab = MNIST_FILES[split]
        out.append(load_idx(_find(data_dir, img), _find(data_dir, lab)))
    return out[0], out[1]


def first_per_class(ds: Dataset, per_class: int) -> Dataset:
    """The first ``per_class`` examples of each class, kept in file order."""
    picked = []
    for c in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == c)[:per_class]
        if len(idx) < per_class:
            raise ValueError(f"class {c} has only {len(idx)} examples, need {per_class}")
        picked.append(idx)
    return ds.take(np.sort(np.concatenate(picked)))


def make_subset(train_full: Dataset, test_full: Dataset, per_class_train: int, per_class_test: int):
    """MNIST/k style subset: train from the train split, test from the test split."""
    return first_per_class(train_full, per_class_train), first_per_class(test_full, per_class_test)


# class 0: main diagonal, class 1: anti-diagonal
PATTERNS = np.array(
    [
        [[+1, -1, -1], [-1, +1, -1], [-1, -1, +1]],
        [[-1, -1, +1], [-1, +1, -1], [+1, -1, -1]],
    ],
    dtype=np.float64,
)


def patterns_3x3() -> Dataset:
    """Two binary 3x3 patterns (pixels +-1) for the convolutional task.

    Bars (a vertical versus a horizontal centre bar) would not do here: every
    2x2 patch of a centre bar comes paired with its negation, so the
    average-pooled response of any filter is identical for both bars.
    """
    return Dataset(PATTERNS.reshape(2, 9).copy(), np.array([0, 1]), 2)
