#!/usr/bin/env python3
"""Build the desk-scale MNIST and Fashion-MNIST IDX files under data/.

The images come from the `mnist` and `fashion-mnist` npm packages, which ship
the digits/clothes as JSON arrays. They are re-encoded here as standard
big-endian IDX files (magic 0x803 for images, 0x801 for labels) with a fixed,
seeded train/test split so every machine gets byte-identical files.

Usage: python3 scripts/fetch_datasets.py [--out data]
"""

import argparse
import io
import json
import os
import random
import struct
import subprocess
import tarfile
import tempfile

ROWS = COLS = 28
PIXELS = ROWS * COLS


def npm_pack(package, workdir):
    name = subprocess.check_output(
        ["npm", "pack", package, "--silent"], cwd=workdir, text=True
    ).strip().splitlines()[-1]
    return tarfile.open(os.path.join(workdir, name), "r:gz")


def read_json(tar, member):
    return json.load(io.TextIOWrapper(tar.extractfile(member), encoding="utf-8"))


def mnist_samples(tar):
    samples = []
    for label in range(10):
        flat = read_json(tar, f"package/src/digits/{label}.json")["data"]
        assert len(flat) % PIXELS == 0
        for i in range(0, len(flat), PIXELS):
            # stored as round(v/255, 3); the 3-decimal error is < 0.5/255
            pixels = bytes(int(round(v * 255.0)) for v in flat[i : i + PIXELS])
            samples.append((pixels, label))
    return samples


def fashion_samples(tar):
    samples = []
    for label in range(10):
        rows = read_json(tar, f"package/src/clothes/{label}.json")["data"]
        for row in rows:
            if len(row) != PIXELS:
                continue
            samples.append((bytes(row), label))
    return samples


def write_idx(path_prefix, samples):
    with open(path_prefix + "-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), ROWS, COLS))
        for pixels, _ in samples:
            f.write(pixels)
    with open(path_prefix + "-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))


def split(samples, n_train, n_test, seed):
    rng = random.Random(seed)
    order = list(range(len(samples)))
    rng.shuffle(order)
    test = [samples[i] for i in order[:n_test]]
    train = [samples[i] for i in order[n_test : n_test + n_train]]
    return train, test


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    ap.add_argument("--mnist-train", type=int, default=8000)
    ap.add_argument("--mnist-test", type=int, default=2000)
    ap.add_argument("--fashion-train", type=int, default=6000)
    ap.add_argument("--fashion-test", type=int, default=1000)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        mnist = mnist_samples(npm_pack("mnist@1.1.0", tmp))
        fashion = fashion_samples(npm_pack("fashion-mnist@1.1.0", tmp))

    for name, samples, n_train, n_test in [
        ("mnist", mnist, args.mnist_train, args.mnist_test),
        ("fashion", fashion, args.fashion_train, args.fashion_test),
    ]:
        if n_train + n_test > len(samples):
            raise SystemExit(f"{name}: only {len(samples)} samples available")
        train, test = split(samples, n_train, n_test, seed=20240101)
        out = os.path.join(args.out, name)
        os.makedirs(out, exist_ok=True)
        write_idx(os.path.join(out, "train"), train)
        write_idx(os.path.join(out, "test"), test)
        print(f"{name}: {len(train)} train / {len(test)} test -> {out}")


if __name__ == "__main__":
    main()
