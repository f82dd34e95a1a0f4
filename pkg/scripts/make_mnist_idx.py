"""Write MNIST-format IDX files into a data directory.

Two sources:

* ``--from-dir DIR`` copies/decompresses canonical MNIST files already on disk
  (e.g. fetched by hand from a mirror listed in the README);
* ``--from-mlxtend`` (default) uses the 5000-image MNIST sample bundled with
  the ``mlxtend`` package (500 images per class). The first 400 images of each
  class go to the train files and the last 100 to the t10k files, so train
  and test never overlap. Classes are interleaved round-robin to give a mixed
  file order.

Usage: python scripts/make_mnist_idx.py data/mnist
"""

import argparse
import gzip
import shutil
import sys
from pathlib import Path

import numpy as np

from ising_ep.data import MNIST_FILES, write_idx


def from_mlxtend(out: Path, n_train_per_class: int = 400) -> None:
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    X = X.astype(np.uint8).reshape(-1, 28, 28)
    splits = {"train": [], "test": []}
    for c in range(10):
        idx = np.flatnonzero(y == c)
        splits["train"].append(idx[:n_train_per_class])
        splits["test"].append(idx[n_train_per_class:])
    for split, parts in splits.items():
        # round-robin interleave of the per-class lists
        longest = max(map(len, parts))
        order = [p[k] for k in range(longest) for p in parts if k < len(p)]
        img, lab = MNIST_FILES[split]
        write_idx(out / img, out / lab, X[order], y[order])
        print(f"{split}: {len(order)} images -> {out / img}")


def from_dir(src: Path, out: Path) -> None:
    for img, lab in MNIST_FILES.values():
        for name in (img, lab):
            for cand in (src / name, src / f"{name}.gz"):
                if cand.exists():
                    opener = gzip.open if cand.suffix == ".gz" else open
                    with opener(cand, "rb") as fi, open(out / name, "wb") as fo:
                        shutil.copyfileobj(fi, fo)
                    break
            else:
                sys.exit(f"missing {name} in {src}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out", type=Path)
    ap.add_argument("--from-dir", type=Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    if args.from_dir:
        from_dir(args.from_dir, args.out)
    else:
        from_mlxtend(args.out)


if __name__ == "__main__":
    main()
