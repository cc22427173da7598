"""MNIST (IDX) and CIFAR-10 (binary batch) readers and writers, and minibatching.

Images are returned as float64 arrays shaped ``(N, C, H, W)`` with pixels
divided by 255. Gzip-compressed files are detected by their magic bytes.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
CIFAR_RECORD = 1 + 3 * 32 * 32
DATA_ROOT_ENV = "VISREG_DATA"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_FILES = {
    "train": [f"data_batch_{i}.bin" for i in range(1, 6)],
    "test": ["test_batch.bin"],
}


class FormatError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, C, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    @property
    def shape(self):
        return self.images.shape[1:]

    def subset(self, n: int | None) -> "Dataset":
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n], self.split)


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw: bytes, path, magic: int, ndims: int):
    need = 4 + 4 * ndims
    if len(raw) < need:
        raise FormatError(f"{path}: truncated header, expected {need} bytes, got {len(raw)}")
    got = struct.unpack(">i", raw[:4])[0]
    if got != magic:
        raise FormatError(f"{path}: bad magic {got}, expected {magic}")
    dims = struct.unpack(f">{ndims}i", raw[4:need])
    body = int(np.prod(dims))
    if len(raw) - need != body:
        raise FormatError(f"{path}: expected {need + body} bytes, got {len(raw)}")
    return dims, np.frombuffer(raw, dtype=np.uint8, offset=need)


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 images ``(N, H, W)``."""
    dims, body = _idx_header(_read_bytes(path), path, IDX_IMAGES_MAGIC, 3)
    return body.reshape(dims)


def read_idx_labels(path) -> np.ndarray:
    dims, body = _idx_header(_read_bytes(path), path, IDX_LABELS_MAGIC, 1)
    return body.reshape(dims)


def _write(path, payload: bytes):
    path = Path(path)
    path.write_bytes(gzip.compress(payload, mtime=0) if path.suffix == ".gz" else payload)


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    _write(path, struct.pack(">4i", IDX_IMAGES_MAGIC, n, h, w) + images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">2i", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def load_mnist(images_path, labels_path, split="train") -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images in {images_path} but "
                          f"{len(labels)} labels in {labels_path}")
    return Dataset(images[:, None].astype(np.float64) / 255.0, labels, split)


def read_cifar_records(path):
    raw = _read_bytes(path)
    if len(raw) % CIFAR_RECORD:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    return rec[:, 1:].reshape(-1, 3, 32, 32), rec[:, 0].copy()


def write_cifar10(path, images, labels) -> None:
    images = np.asarray(images, dtype=np.uint8).reshape(-1, 3 * 32 * 32)
    labels = np.asarray(labels, dtype=np.uint8)
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    _write(path, np.concatenate([labels[:, None], images], axis=1).tobytes())


def load_cifar10(batch_paths, split="train") -> Dataset:
    if isinstance(batch_paths, (str, os.PathLike)):
        batch_paths = [batch_paths]
    parts = [read_cifar_records(p) for p in batch_paths]
    if not parts:
        raise ValueError("no CIFAR-10 batch files given")
    images = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    return Dataset(images.astype(np.float64) / 255.0, labels, split)


def to_uint8(images) -> np.ndarray:
    """Inverse of the /255 normalization (exact for loaded data)."""
    return np.rint(np.asarray(images) * 255.0).astype(np.uint8)


def _find(root: Path, name: str) -> Path:
    for cand in (root / name, root / (name + ".gz")):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"{name}[.gz] not found under {root}")


def data_root(root=None) -> Path:
    root = root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise FileNotFoundError(f"no dataset directory given and ${DATA_ROOT_ENV} is unset")
    return Path(root)


def load_split(dataset: str, split: str, root=None) -> Dataset:
    """Load a standard split from a directory holding the distributors' file names."""
    root = data_root(root)
    if dataset == "mnist":
        img, lab = MNIST_FILES[split]
        return load_mnist(_find(root, img), _find(root, lab), split)
    if dataset == "cifar10":
        return load_cifar10([_find(root, f) for f in CIFAR_FILES[split]], split)
    raise ValueError(f"unknown dataset {dataset!r}")


def channel_stats(ds: Dataset):
    mean = ds.images.mean(axis=(0, 2, 3), keepdims=True)[0]
    std = ds.images.std(axis=(0, 2, 3), keepdims=True)[0]
    return mean, np.where(std > 0, std, 1.0)


def standardize(ds: Dataset, stats=None) -> Dataset:
    """Per-channel zero mean / unit variance; pass the training ``stats`` for test data."""
    mean, std = stats if stats is not None else channel_stats(ds)
    return Dataset((ds.images - mean) / std, ds.labels, ds.split)


def minibatches(ds: Dataset, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Index arrays for one epoch; the permutation depends only on ``(seed, epoch)``."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.random.default_rng([seed, 1, epoch]).permutation(len(ds))
    return [perm[i:i + batch_size] for i in range(0, len(ds), batch_size)]
