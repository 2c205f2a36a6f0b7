#!/usr/bin/env python3
"""Build the desk-scale MNIST subset used by the acceptance suite.

Source: the 10,000 MNIST digits bundled in the npm package `mnist`
(https://www.npmjs.com/package/mnist, v1.1.0). Pixels there are stored as
v/255 rounded to three decimals; rounding v*255 recovers the original bytes.

The digits are shuffled with a fixed seed and written as a standard IDX pair:
    desk-mnist-images-idx3-ubyte   (magic 0x00000803, N x 28 x 28 uint8)
    desk-mnist-labels-idx1-ubyte   (magic 0x00000801, N uint8)

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/make_desk_mnist.py package/src/digits data/
    tar czf data/desk-mnist.tar.gz -C data desk-mnist-images-idx3-ubyte desk-mnist-labels-idx1-ubyte
"""
import json
import pathlib
import struct
import sys

import numpy as np


def main(digits_dir: str, out_dir: str) -> None:
    images, labels = [], []
    for digit in range(10):
        raw = json.loads((pathlib.Path(digits_dir) / f"{digit}.json").read_text())["data"]
        block = np.rint(np.asarray(raw, dtype=np.float64).reshape(-1, 784) * 255.0)
        images.append(block.astype(np.uint8))
        labels += [digit] * len(block)
    x = np.vstack(images)
    y = np.asarray(labels, dtype=np.uint8)
    order = np.random.RandomState(20150101).permutation(len(y))
    x, y = x[order], y[order]

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "desk-mnist-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(y), 28, 28))
        f.write(x.tobytes())
    with open(out / "desk-mnist-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(y)))
        f.write(y.tobytes())
    print(f"wrote {len(y)} digits, class counts {np.bincount(y).tolist()}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
