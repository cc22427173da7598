"""Write the 5,000-digit MNIST sample bundled with mlxtend as IDX files.

    python scripts/make_mnist_subset.py OUT_DIR [--test 1000] [--seed 0]

Produces the four standard gzip file names, so OUT_DIR can be used as
``VISREG_DATA`` or ``[data] root``. The sample is class-sorted, so it is
shuffled with a stratified split before writing.
"""

import argparse
from pathlib import Path

import numpy as np

from visreg import data


def build(out_dir, n_test=1000, seed=0) -> Path:
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    images = X.reshape(-1, 28, 28).astype(np.uint8)
    labels = y.astype(np.uint8)
    rng = np.random.default_rng(seed)
    test_idx = []
    per_class = n_test // 10
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        test_idx.extend(rng.choice(idx, per_class, replace=False))
    test_mask = np.zeros(len(labels), bool)
    test_mask[test_idx] = True
    train_idx = rng.permutation(np.flatnonzero(~test_mask))
    test_idx = rng.permutation(np.flatnonzero(test_mask))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = data.MNIST_FILES
    data.write_idx_images(out / (names["train"][0] + ".gz"), images[train_idx])
    data.write_idx_labels(out / (names["train"][1] + ".gz"), labels[train_idx])
    data.write_idx_images(out / (names["test"][0] + ".gz"), images[test_idx])
    data.write_idx_labels(out / (names["test"][1] + ".gz"), labels[test_idx])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = build(args.out_dir, args.test, args.seed)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
