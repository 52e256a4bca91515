#!/usr/bin/env python3
"""Build gzipped MNIST IDX files from the 10k digits bundled in the `mnist` npm package.

The npm package (cazala/mnist, MIT) ships 10,000 MNIST digits as JSON arrays of
pixel intensities rounded to three decimals. This script restores the original
bytes (round(v * 255)), shuffles with a fixed seed and writes an 8000/2000
train/test split in the standard IDX layout so the regular loader can read it.

    python3 tools/mnist_from_npm.py --out data/mnist            # runs `npm pack mnist`
    python3 tools/mnist_from_npm.py --package /path/to/package --out data/mnist
"""
import argparse
import gzip
import json
import pathlib
import struct
import subprocess
import tarfile
import tempfile

import numpy as np

SIDE = 28


def load_package(pkg: pathlib.Path):
    images, labels = [], []
    for digit in range(10):
        data = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        arr = np.asarray(data, dtype=np.float64).reshape(-1, SIDE * SIDE)
        images.append(np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8))
        labels.append(np.full(arr.shape[0], digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def write_idx(path: pathlib.Path, array: np.ndarray):
    if array.ndim == 3:
        header = struct.pack(">IIII", 2051, *array.shape)
    else:
        header = struct.pack(">II", 2049, array.shape[0])
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header)
        f.write(array.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--package", type=pathlib.Path, help="unpacked npm package dir (contains src/digits)")
    ap.add_argument("--out", type=pathlib.Path, required=True)
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.package
        if pkg is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp, check=True)
            with tarfile.open(next(pathlib.Path(tmp).glob("mnist-*.tgz"))) as tar:
                tar.extractall(tmp)
            pkg = pathlib.Path(tmp) / "package"
        images, labels = load_package(pkg)

    order = np.random.default_rng(args.seed).permutation(len(labels))
    images = images[order].reshape(-1, SIDE, SIDE)
    labels = labels[order]
    n = args.train
    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "train-images-idx3-ubyte.gz", images[:n])
    write_idx(args.out / "train-labels-idx1-ubyte.gz", labels[:n])
    write_idx(args.out / "t10k-images-idx3-ubyte.gz", images[n:])
    write_idx(args.out / "t10k-labels-idx1-ubyte.gz", labels[n:])
    print(f"wrote {n} train / {len(labels) - n} test digits to {args.out}")


if __name__ == "__main__":
    main()
