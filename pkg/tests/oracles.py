"""Slow, obviously-correct reference implementations used by the tests."""

from fractions import Fraction

import numpy as np


def bresenham_reference(p0, p1):
    """All-octant integer Bresenham, traced from the smaller endpoint."""
    a, b = sorted([tuple(p0), tuple(p1)])
    x0, y0 = a
    x1, y1 = b
    dx = abs(x1 - x0)
    sx = 1 if x0 < x1 else -1
    dy = -abs(y1 - y0)
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    out = []
    while True:
        out.append((x0, y0))
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
    if (tuple(p0), tuple(p1)) != (a, b):
        out.reverse()
    return out


def dilate_reference(mask, radius):
    """Set every pixel within Euclidean ``radius`` of a set pixel."""
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    yy, xx = np.mgrid[0:h, 0:w]
    for y, x in zip(ys, xs):
        out |= (yy - y) ** 2 + (xx - x) ** 2 <= radius * radius
    return out


def metrics_reference(counts):
    """Exact macro-F1, unweighted and balanced accuracy, 0 for 0/0."""
    c = [[int(v) for v in row] for row in counts]
    k = len(c)
    total = sum(map(sum, c))
    f1s, recalls = [], []
    for i in range(k):
        tp = c[i][i]
        pred = sum(c[j][i] for j in range(k))
        true = sum(c[i])
        p = Fraction(tp, pred) if pred else Fraction(0)
        r = Fraction(tp, true) if true else Fraction(0)
        f1s.append(2 * p * r / (p + r) if p + r else Fraction(0))
        recalls.append(r)
    macro = sum(f1s) / k
    acc = Fraction(sum(c[i][i] for i in range(k)), total)
    bal = sum(recalls) / k
    return float(macro), float(acc), float(bal)
