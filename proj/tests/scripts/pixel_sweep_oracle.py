#!/usr/bin/env python3
"""Raw-pixel invariance curve computed without the C++ library.

Reads the probe images named in a raw sweep CSV (probe,identifier,...) from
the dataset manifest, applies the transform with numpy bilinear sampling
about (31.5, 31.5), zero outside the image, and prints
param1,param2,mean_similarity where similarity is the cosine of the raw
pixel vectors.
"""

import argparse
import csv
import math
import os
import sys

import numpy as np

SIDE = 64
CENTRE = 31.5


def read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    assert tokens[0] == b"P5", path
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    img = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return img.astype(np.float64) / maxval


def bilinear(img, sx, sy):
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    ax, ay = sx - x0, sy - y0
    out = np.zeros_like(sx)
    for dy, wy in ((0, 1 - ay), (1, ay)):
        for dx, wx in ((0, 1 - ax), (1, ax)):
            xi = (x0 + dx).astype(int)
            yi = (y0 + dy).astype(int)
            ok = (xi >= 0) & (xi < SIDE) & (yi >= 0) & (yi < SIDE)
            vals = np.zeros_like(sx)
            vals[ok] = img[yi[ok], xi[ok]]
            out += wy * wx * vals
    return out


def transform(img, kind, p1, p2):
    ys, xs = np.mgrid[0:SIDE, 0:SIDE].astype(np.float64)
    u, v = xs - CENTRE, ys - CENTRE
    if kind == "rotation":
        if p1 == 0:
            return img.copy()
        t = math.radians(p1)
        c, s = math.cos(t), math.sin(t)
        return bilinear(img, CENTRE + c * u - s * v, CENTRE + s * u + c * v)
    if kind == "scale":
        if p1 == 1:
            return img.copy()
        return bilinear(img, CENTRE + u / p1, CENTRE + v / p1)
    dx, dy = int(p1), int(p2)
    out = np.zeros_like(img)
    src = img[max(0, -dy):SIDE - max(0, dy), max(0, -dx):SIDE - max(0, dx)]
    out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return out


def cosine(a, b):
    na, nb = np.sqrt(np.sum(a * a)), np.sqrt(np.sum(b * b))
    if na == 0 or nb == 0:
        return 0.0
    return float(np.sum(a * b) / (na * nb))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--raw", required=True, help="raw per-probe CSV from a sweep")
    ap.add_argument("--sweep", required=True, choices=["rotation", "scale", "shift"])
    args = ap.parse_args()

    base = os.path.dirname(os.path.abspath(args.manifest))
    paths = {}
    with open(args.manifest) as f:
        next(f)
        for line in f:
            ident, rel, _ = line.rstrip("\n").split("\t", 2)
            paths[ident] = os.path.join(base, rel)

    probes, points = [], []
    with open(args.raw) as f:
        for row in csv.DictReader(f):
            if row["identifier"] not in probes:
                probes.append(row["identifier"])
            if len(probes) == 1:
                p2 = float(row["param2"]) if row["param2"] else 0.0
                points.append((float(row["param1"]), p2, row["param1"], row["param2"]))

    images = [read_pgm(paths[p]) for p in probes]
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["param1", "param2", "mean_similarity"])
    for p1, p2, t1, t2 in points:
        sims = [cosine(img, transform(img, args.sweep, p1, p2)) for img in images]
        out.writerow([t1, t2, repr(sum(sims) / len(sims))])


if __name__ == "__main__":
    main()
