"""Regenerate the undersegmentation vs partial-segment fixtures.

Ground truth: a 10x10 target (class 1) beside a 10x6 neighbour (class 2) on
background. The undersegmented prediction covers the whole target and spills
25 pixels onto the neighbour (p=0.8, r=1 for class 1). The partial prediction
covers 80 target pixels and nothing else (p=1, r=0.8). Both have F1 = 8/9.

    python3 tests/fixtures/make_precision_fixtures.py
"""
from pathlib import Path

import numpy as np

from segmeld.raster import write_pgm16

HERE = Path(__file__).resolve().parent


def build():
    gt = np.zeros((20, 20), dtype=np.int32)
    gt[5:15, 2:12] = 1
    gt[5:15, 12:18] = 2

    under = gt.copy()
    under[5:10, 12:17] = 1

    partial = gt.copy()
    partial[13:15, 2:12] = 0
    return gt, under, partial


def main():
    gt, under, partial = build()
    write_pgm16(gt, HERE / "precision_gt.labels.pgm")
    write_pgm16(under, HERE / "precision_undersegmented.labels.pgm")
    write_pgm16(partial, HERE / "precision_partial.labels.pgm")


if __name__ == "__main__":
    main()
