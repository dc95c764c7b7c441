"""Independent reference computations used to check the package.

Nothing here imports from ``ringpls``; each oracle recomputes a quantity
by a different route (exact integers, plain loops, a library solver).
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import scipy.linalg


def ring_counts_exact(centre, radius, n_rings, dims):
    """Per-ring pixel counts by exact rational arithmetic, one row at a time.

    A pixel at squared distance d2 belongs to ring i when
    (i-1) R^2 < N d2 <= i R^2 (ring 1 also takes d2 = 0) and d2 < R^2.
    """
    cx, cy = Fraction(centre[0]), Fraction(centre[1])
    R2 = Fraction(radius) ** 2
    w, h = dims
    counts = [0] * n_rings
    for y in range(h):
        dy2 = (y - cy) ** 2
        if dy2 >= R2:
            continue
        for x in range(w):
            d2 = (x - cx) ** 2 + dy2
            if d2 >= R2:
                continue
            q = n_rings * d2 / R2
            ring = max(1, math.ceil(q))
            counts[min(ring, n_rings) - 1] += 1
    return counts


def ring_counts_by_row(centre, radius, n_rings, dims):
    """Same counts, faster: per row, count columns inside each boundary circle.

    Only valid for centres on the integer or half-integer grid and an integer
    radius, where 4 d2 is an integer and all comparisons stay exact.
    """
    cx2, cy2 = int(2 * centre[0]), int(2 * centre[1])
    assert cx2 == 2 * centre[0] and cy2 == 2 * centre[1]
    R = int(radius)
    assert R == radius
    w, h = dims
    # inside[i] counts pixels with N * 4d2 <= 4 R^2 i (and strictly < for the outer edge)
    cum = [0] * (n_rings + 1)
    for y in range(h):
        dy4 = (2 * y - cy2) ** 2
        for i in range(1, n_rings + 1):
            limit = 4 * R * R * i  # compare n_rings * D4 <= limit
            strict = i == n_rings
            cum[i] += _count_cols(dy4, cx2, w, n_rings, limit, strict)
    return [cum[i] - cum[i - 1] for i in range(1, n_rings + 1)]


def _count_cols(dy4, cx2, w, n, limit, strict):
    # D4 = (2x - cx2)^2 + dy4; need n*D4 <= limit (or < when strict)
    budget = limit - n * dy4
    if budget < 0 or (strict and budget == 0):
        return 0
    # largest s >= 0 with n*s^2 <= budget (or < budget)
    s = math.isqrt(budget // n)
    while n * (s + 1) ** 2 <= budget:
        s += 1
    while s >= 0 and (n * s * s > budget or (strict and n * s * s == budget)):
        s -= 1
    if s < 0:
        return 0
    # columns with |2x - cx2| <= s  ->  (cx2 - s)/2 <= x <= (cx2 + s)/2
    lo = max(0, -((s - cx2) // 2))
    hi = min(w - 1, (cx2 + s) // 2)
    return max(0, hi - lo + 1)


def classify_loop(image, reference_rgb, tolerance):
    """Per-pixel nearest-within-tolerance classification with Python loops; -1 = non-road."""
    h, w, _ = image.shape
    out = np.full((h, w), -1, dtype=int)
    tol2 = tolerance * tolerance
    refs = [tuple(int(v) for v in reference_rgb[c]) for c in range(4)]
    for y in range(h):
        for x in range(w):
            r, g, b = (int(v) for v in image[y, x])
            for c, (rr, gg, bb) in enumerate(refs):
                if (r - rr) ** 2 + (g - gg) ** 2 + (b - bb) ** 2 <= tol2:
                    out[y, x] = c
                    break
    return out


def intensity_bruteforce(image, centre, radius, n_rings, reference_rgb, tolerance):
    """Ring fractions and colour totals by an explicit per-pixel loop."""
    labels = classify_loop(image, reference_rgb, tolerance)
    h, w = labels.shape
    counts = np.zeros((n_rings, 4))
    sizes = np.zeros(n_rings)
    cx, cy = centre
    for y in range(h):
        for x in range(w):
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            if d2 >= radius ** 2:
                continue
            ring = min(max(math.ceil(n_rings * d2 / radius ** 2), 1), n_rings)
            sizes[ring - 1] += 1
            if labels[y, x] >= 0:
                counts[ring - 1, labels[y, x]] += 1
    fractions = counts / sizes[:, None]
    totals = [sum(fractions[i, c] for i in range(n_rings)) / n_rings for c in range(4)]
    return fractions, np.array(totals)


def min_norm_lstsq_predictions(X, Y):
    """Training predictions of centred minimum-norm least squares via an SVD-based LAPACK driver."""
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    B, *_ = scipy.linalg.lstsq(Xc, Yc, lapack_driver="gelsd")
    return Xc @ B + Y.mean(axis=0)


def first_pls_weight(X0, y0):
    v = X0.T @ y0
    return v / np.sqrt(float(v @ v))


def pearson_direct(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def chi2_two_sample(u, v, bins):
    """Two-group chi-square on shared equal-width bins, counted with explicit loops."""
    lo, hi = min(min(u), min(v)), max(max(u), max(v))
    width = (hi - lo) / bins

    def hist(sample):
        counts = [0] * bins
        for x in sample:
            k = int((x - lo) // width)
            counts[min(k, bins - 1)] += 1
        return counts

    ou, ov = hist(u), hist(v)
    nu, nv = len(u), len(v)
    total = 0.0
    for a, b in zip(ou, ov):
        if a + b == 0:
            continue
        eu = (a + b) / (nu + nv) * nu
        ev = (a + b) / (nu + nv) * nv
        total += (a - eu) ** 2 / eu + (b - ev) ** 2 / ev
    return total


def join_nested_loop(left_keys, right_keys):
    count = 0
    for a in left_keys:
        for b in right_keys:
            if a == b:
                count += 1
    return count
