"""Write a small MNIST stand-in in IDX format from the 5000-image subset
bundled with mlxtend (500 images per digit).

The subset is split per class into disjoint train (first 400 per digit) and
test (last 100 per digit) files, so that ``load_mnist`` can be exercised
offline. Usage::

    python scripts/make_mnist_fixture.py OUTDIR
"""
import sys
from pathlib import Path

import numpy as np

from ialam.datasets import write_idx


def build(outdir, n_train_per_class=400):
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    X = X.astype(np.uint8).reshape(-1, 28, 28)
    y = y.astype(np.uint8)
    tr, te = [], []
    for c in range(10):
        idx = np.flatnonzero(y == c)
        tr.append(idx[:n_train_per_class])
        te.append(idx[n_train_per_class:])
    tr, te = np.sort(np.concatenate(tr)), np.sort(np.concatenate(te))
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", X[tr])
    write_idx(out / "train-labels-idx1-ubyte.gz", y[tr])
    write_idx(out / "t10k-images-idx3-ubyte.gz", X[te])
    write_idx(out / "t10k-labels-idx1-ubyte.gz", y[te])
    return out


if __name__ == "__main__":
    print(build(sys.argv[1] if len(sys.argv) > 1 else "data/mnist"))
