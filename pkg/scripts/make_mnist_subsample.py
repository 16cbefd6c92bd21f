"""Build the 2k-vector MNIST desk corpus used by the retrieval tests.

Source: the 5000-sample MNIST extract shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz; 784 pixel columns then the label).
The extract is sorted by digit, so a seeded random subset of 2000 rows
(kept in file order) is written in libsvm format with raw pixel values.

    pip download mlxtend --no-deps -d /tmp/mlx
    python scripts/make_mnist_subsample.py /tmp/mlx/mlxtend-*.whl tests/data/mnist_2k.libsvm.gz
"""

import argparse
import gzip
import io
import zipfile

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    with zipfile.ZipFile(args.wheel) as z:
        raw = gzip.decompress(z.read(MEMBER))
    arr = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.int64)
    rows = np.sort(np.random.default_rng(args.seed).choice(len(arr), args.n, replace=False))
    arr = arr[rows]
    X, y = arr[:, :-1], arr[:, -1]
    with gzip.GzipFile(args.out, "wb", mtime=0) as fh:
        for row, label in zip(X, y):
            nz = np.flatnonzero(row)
            toks = [str(label)] + [f"{j + 1}:{row[j]}" for j in nz]
            fh.write((" ".join(toks) + "\n").encode())


if __name__ == "__main__":
    main()
