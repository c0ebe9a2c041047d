#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Convert the digit JSON files shipped with the npm `mnist` package into IDX files.

The package stores roughly 1000 real MNIST digits per class as flat arrays of
28x28 intensities in [0, 1]. Each class is split deterministically: the first
`--train-fraction` of its samples go to the training files, the rest to the
test files. Both files are shuffled with a fixed seed so that any contiguous
slice (the trailing 10% of the test file is the server's validation split)
holds a roughly proportional label mix.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_json_to_idx.py package/src/digits data/mnist
"""
import argparse
import json
import pathlib
import random
import struct

SIZE = 28 * 28


def load_digits(digits_dir):
    per_class = []
    for label in range(10):
        raw = json.loads((digits_dir / f"{label}.json").read_text())["data"]
        count = len(raw) // SIZE
        samples = []
        for i in range(count):
            px = raw[i * SIZE:(i + 1) * SIZE]
            samples.append(bytes(min(255, max(0, round(v * 255))) for v in px))
        per_class.append(samples)
    return per_class


def shuffled(groups, seed):
    out = [(img, label) for label, g in enumerate(groups) for img in g]
    random.Random(seed).shuffle(out)
    return out


def write_idx(prefix, items):
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(items), 28, 28))
        for img, _ in items:
            f.write(img)
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(items)))
        f.write(bytes(label for _, label in items))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--train-fraction", type=float, default=0.8)
    args = ap.parse_args()

    per_class = load_digits(args.digits_dir)
    train, test = [], []
    for samples in per_class:
        cut = int(len(samples) * args.train_fraction)
        train.append(samples[:cut])
        test.append(samples[cut:])
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train", shuffled(train, 20201))
    write_idx(args.out_dir / "t10k", shuffled(test, 20202))
    print(f"train={sum(map(len, train))} test={sum(map(len, test))}")


if __name__ == "__main__":
    main()
