#!/usr/bin/env python3
"""Writes the translated-blob image pair used by the examples and tests.

Both images are 16-bit PGMs on a 64 x 64 periodic grid with unit side
length. The moving blob sits at the centre; the fixed blob is shifted three
nodes along the row axis.
"""
import argparse
import pathlib

import numpy as np


def blob(n, center, width):
    h = 1.0 / n
    y, x = np.meshgrid(np.arange(n) * h, np.arange(n) * h, indexing="ij")
    dy = (y - center[0] + 0.5) % 1.0 - 0.5
    dx = (x - center[1] + 0.5) % 1.0 - 0.5
    return np.exp(-(dx * dx + dy * dy) / (2 * width * width))


def write_pgm(path, img):
    q = np.round(np.clip(img, 0, 1) * 65535).astype(">u2")
    n0, n1 = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{n1} {n0}\n65535\n".encode())
        f.write(q.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data", type=pathlib.Path)
    ap.add_argument("--n", default=64, type=int)
    ap.add_argument("--width", default=5.0, type=float, help="blob width in grid cells")
    ap.add_argument("--shift", default=3.0, type=float, help="translation in grid cells")
    args = ap.parse_args()
    h = 1.0 / args.n
    args.out.mkdir(parents=True, exist_ok=True)
    write_pgm(args.out / "blob_moving.pgm", blob(args.n, (0.5, 0.5), args.width * h))
    write_pgm(args.out / "blob_fixed.pgm", blob(args.n, (0.5, 0.5 + args.shift * h), args.width * h))


if __name__ == "__main__":
    main()
