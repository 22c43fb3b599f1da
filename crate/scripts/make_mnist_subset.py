#!/usr/bin/env python3
"""Write a small MNIST subset in IDX format.

Source: the `mnist` npm package (10000 digits stored as JSON float arrays in
[0, 1], grouped per digit). Fetch it with

    curl -sO https://registry.npmjs.org/mnist/-/mnist-1.1.0.tgz && tar xzf mnist-1.1.0.tgz

then run

    python3 scripts/make_mnist_subset.py package/src/digits data/ 120

Digits are interleaved 0,1,...,9,0,1,... so any prefix is class balanced.
Pixel values are scaled by 255 and rounded to unsigned bytes.
"""
import json
import struct
import sys
from pathlib import Path

SIDE = 28


def main():
    src, out, per_class = Path(sys.argv[1]), Path(sys.argv[2]), int(sys.argv[3])
    digits = {}
    for d in range(10):
        flat = json.loads((src / f"{d}.json").read_text())["data"]
        n = len(flat) // (SIDE * SIDE)
        digits[d] = [flat[k * SIDE * SIDE:(k + 1) * SIDE * SIDE] for k in range(n)]
    images, labels = [], []
    for k in range(per_class):
        for d in range(10):
            images.append(bytes(min(255, max(0, round(v * 255))) for v in digits[d][k]))
            labels.append(d)
    count = len(images)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "mnist-subset-images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, SIDE, SIDE))
        for img in images:
            f.write(img)
    with open(out / "mnist-subset-labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(bytes(labels))
    print(f"wrote {count} images")


if __name__ == "__main__":
    main()
