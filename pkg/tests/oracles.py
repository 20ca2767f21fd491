"""Brute-force reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def raster_iou(a, b) -> float:
    """IoU by counting unit pixels on an integer grid (integer-coordinate boxes only)."""
    xs = range(int(min(a[0], b[0])), int(max(a[2], b[2])))
    ys = range(int(min(a[1], b[1])), int(max(a[3], b[3])))
    inter = union = 0
    for x in xs:
        for y in ys:
            ina = a[0] <= x < a[2] and a[1] <= y < a[3]
            inb = b[0] <= x < b[2] and b[1] <= y < b[3]
            inter += ina and inb
            union += ina or inb
    return inter / union if union else 0.0


def brute_dtw(a, b, radius=None) -> float:
    """Minimum path cost over every monotone warping path (recursive enumeration)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    n, m = len(a), len(b)

    def ok(i, j):
        if radius is None:
            return True
        return abs(Fraction(i * m, n) - j) <= Fraction(radius).limit_denominator(10**6)

    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        if not ok(i, j):
            return
        acc += float(np.sqrt(((a[i] - b[j]) ** 2).sum()))
        if i == n - 1 and j == m - 1:
            best = min(best, acc)
            return
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best


def brute_connections(cells, window: int) -> np.ndarray:
    """Direct triple loop over seconds, stanza rows and code pairs."""
    cells = np.asarray(cells)
    T, k = cells.shape
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    out = np.zeros(len(pairs))
    for t in range(T):
        stanza = range(max(0, t - window + 1), t + 1)
        for p, (i, j) in enumerate(pairs):
            hit = False
            for s in stanza:
                if (cells[t, i] and cells[s, j]) or (cells[t, j] and cells[s, i]):
                    hit = True
            out[p] += hit
    return out


def brute_mw_exact_p(x, y) -> float:
    """Two-sided exact p by enumerating all C(n, n1) rank subsets (no ties)."""
    n1, n2 = len(x), len(y)
    allv = sorted(list(x) + list(y))
    rank = {v: i + 1 for i, v in enumerate(allv)}
    u_obs = sum(rank[v] for v in x) - n1 * (n1 + 1) / 2
    us = [sum(c) - n1 * (n1 + 1) / 2 for c in itertools.combinations(range(1, n1 + n2 + 1), n1)]
    lo = sum(u <= u_obs for u in us) / len(us)
    hi = sum(u >= u_obs for u in us) / len(us)
    return min(1.0, 2 * min(lo, hi))


def brute_pseudo_f(X, labels) -> float:
    """Pseudo-F from group centroids (Euclidean identity with the distance form)."""
    X = np.asarray(X, float)
    labels = np.asarray(labels)
    grand = X.mean(axis=0)
    ss_t = ((X - grand) ** 2).sum()
    ss_w = sum(((X[labels == g] - X[labels == g].mean(axis=0)) ** 2).sum() for g in np.unique(labels))
    g = len(np.unique(labels))
    n = len(X)
    return ((ss_t - ss_w) / (g - 1)) / (ss_w / (n - g))


def brute_permanova_p(X, labels) -> float:
    """Exact p over all N! orderings of the labels (duplicates included, equal weights)."""
    f_obs = brute_pseudo_f(X, labels)
    hits = total = 0
    for perm in itertools.permutations(labels):
        f = brute_pseudo_f(X, list(perm))
        hits += f >= f_obs - 1e-9 * max(1.0, abs(f_obs))
        total += 1
    return hits / total


def brute_assign(mid, centroids) -> int:
    d = [math.hypot(cx - mid[0], cy - mid[1]) for cx, cy in centroids]
    return d.index(min(d))


def brute_best_assignment(iou_matrix, threshold) -> float:
    """Best total IoU over all one-to-one assignments restricted to pairs >= threshold."""
    n, m = iou_matrix.shape
    best = 0.0
    for k in range(0, min(n, m) + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                vals = [iou_matrix[r, c] for r, c in zip(rows, cols)]
                if all(v >= threshold for v in vals):
                    best = max(best, sum(vals))
    return best
