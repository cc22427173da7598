import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from visreg import data
from visreg.data import FormatError


@settings(max_examples=25, deadline=None)
@given(n=st.integers(0, 6), h=st.integers(1, 5), w=st.integers(1, 5), seed=st.integers(0, 999),
       gz=st.booleans())
def test_idx_roundtrip(tmp_path_factory, n, h, w, seed, gz):
    rng = np.random.default_rng(seed)
    imgs = rng.integers(0, 256, (n, h, w), dtype=np.uint8)
    labs = rng.integers(0, 10, n, dtype=np.uint8)
    d = tmp_path_factory.mktemp("idx")
    suffix = ".gz" if gz else ""
    data.write_idx_images(d / f"i{suffix}", imgs)
    data.write_idx_labels(d / f"l{suffix}", labs)
    assert np.array_equal(data.read_idx_images(d / f"i{suffix}"), imgs)
    assert np.array_equal(data.read_idx_labels(d / f"l{suffix}"), labs)


def test_idx_header_layout(tmp_path):
    data.write_idx_images(tmp_path / "i", np.zeros((2, 3, 4), np.uint8))
    raw = (tmp_path / "i").read_bytes()
    assert raw[:16] == struct.pack(">4i", 2051, 2, 3, 4)
    assert len(raw) == 16 + 24


def test_idx_bad_magic(tmp_path):
    (tmp_path / "x").write_bytes(struct.pack(">4i", 2049, 1, 1, 1) + b"\0")
    with pytest.raises(FormatError, match="bad magic 2049, expected 2051"):
        data.read_idx_images(tmp_path / "x")


def test_idx_truncated(tmp_path):
    (tmp_path / "x").write_bytes(gzip.compress(struct.pack(">4i", 2051, 2, 2, 2) + b"\0" * 5))
    with pytest.raises(FormatError, match="expected 24 bytes, got 21"):
        data.read_idx_images(tmp_path / "x")
    (tmp_path / "y").write_bytes(b"\0\0")
    with pytest.raises(FormatError, match="truncated header"):
        data.read_idx_labels(tmp_path / "y")


def test_load_mnist_scales_and_checks_counts(tmp_path):
    data.write_idx_images(tmp_path / "i", np.full((3, 2, 2), 255, np.uint8))
    data.write_idx_labels(tmp_path / "l", [1, 2, 3])
    ds = data.load_mnist(tmp_path / "i", tmp_path / "l")
    assert ds.images.shape == (3, 1, 2, 2) and ds.images.max() == 1.0
    assert np.array_equal(data.to_uint8(ds.images[:, 0]), np.full((3, 2, 2), 255))
    data.write_idx_labels(tmp_path / "l2", [1, 2])
    with pytest.raises(FormatError, match="3 images"):
        data.load_mnist(tmp_path / "i", tmp_path / "l2")


def test_cifar_roundtrip_and_layout(tmp_path, rng):
    imgs = rng.integers(0, 256, (4, 3, 32, 32), dtype=np.uint8)
    labs = np.array([3, 0, 9, 1], np.uint8)
    data.write_cifar10(tmp_path / "b.bin", imgs, labs)
    raw = (tmp_path / "b.bin").read_bytes()
    assert len(raw) == 4 * 3073
    assert raw[3073] == 0 and raw[3074:3074 + 1024] == imgs[1, 0].tobytes()
    got_i, got_l = data.read_cifar_records(tmp_path / "b.bin")
    assert np.array_equal(got_i, imgs) and np.array_equal(got_l, labs)
    ds = data.load_cifar10([tmp_path / "b.bin", tmp_path / "b.bin"])
    assert len(ds) == 8 and ds.shape == (3, 32, 32)
    assert np.array_equal(data.to_uint8(ds.images[:4]), imgs)


def test_cifar_bad_length(tmp_path):
    (tmp_path / "b.bin").write_bytes(b"\0" * 3074)
    with pytest.raises(FormatError, match="multiple of 3073"):
        data.read_cifar_records(tmp_path / "b.bin")


def test_load_split_uses_env(tmp_path, monkeypatch):
    img, lab = data.MNIST_FILES["test"]
    data.write_idx_images(tmp_path / (img + ".gz"), np.zeros((2, 28, 28), np.uint8))
    data.write_idx_labels(tmp_path / lab, [0, 1])
    monkeypatch.setenv(data.DATA_ROOT_ENV, str(tmp_path))
    assert len(data.load_split("mnist", "test")) == 2
    monkeypatch.delenv(data.DATA_ROOT_ENV)
    with pytest.raises(FileNotFoundError, match="VISREG_DATA"):
        data.load_split("mnist", "test")
    with pytest.raises(FileNotFoundError, match="train-images"):
        data.load_split("mnist", "train", tmp_path)


def test_standardize_uses_train_stats(rng):
    tr = data.Dataset(rng.normal(3, 2, (50, 2, 4, 4)), np.zeros(50))
    te = data.Dataset(rng.normal(3, 2, (10, 2, 4, 4)), np.zeros(10))
    stats = data.channel_stats(tr)
    s = data.standardize(tr, stats)
    assert np.allclose(s.images.mean(axis=(0, 2, 3)), 0) and np.allclose(s.images.std(axis=(0, 2, 3)), 1)
    assert np.allclose(data.standardize(te, stats).images, (te.images - stats[0]) / stats[1])


def test_minibatches_partition_and_seeding():
    ds = data.Dataset(np.zeros((23, 1, 1, 1)), np.zeros(23))
    b = data.minibatches(ds, 5, seed=1, epoch=0)
    assert [len(x) for x in b] == [5, 5, 5, 5, 3]
    assert sorted(np.concatenate(b)) == list(range(23))
    again = data.minibatches(ds, 5, seed=1, epoch=0)
    assert all(np.array_equal(x, y) for x, y in zip(b, again))
    assert not np.array_equal(np.concatenate(b), np.concatenate(data.minibatches(ds, 5, 1, 1)))


def test_dataset_validation():
    with pytest.raises(ValueError):
        data.Dataset(np.zeros((2, 3, 3)), [0, 1])
    with pytest.raises(ValueError):
        data.Dataset(np.zeros((2, 1, 3, 3)), [0])
