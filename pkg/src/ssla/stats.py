"""Rank tests, multiple-comparison adjustment, PERMANOVA and resampling helpers."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps
from scipy.spatial.distance import pdist, squareform

from .core import ValidationError

EXACT_MAX_N = 12
EXACT_MAX_ARRANGEMENTS = 10_000


@dataclass(frozen=True)
class MannWhitneyResult:
    U: float
    p_raw: float
    r: float
    method: str
    n1: int
    n2: int
    median_x: float
    median_y: float
    z: float | None = None


def rank_biserial(U: float, n1: int, n2: int) -> float:
    if n1 < 1 or n2 < 1:
        raise ValidationError("rank_biserial needs n1, n2 >= 1")
    if not 0 <= U <= n1 * n2:
        raise ValidationError(f"U={U} outside [0, {n1 * n2}]")
    return 1.0 - 2.0 * U / (n1 * n2)


def u_null_counts(n1: int, n2: int) -> list[int]:
    """Number of rank arrangements giving each U in 0..n1*n2 (no ties).

    Uses the recurrence f(n1, n2, u) = f(n1-1, n2, u-n2) + f(n1, n2-1, u).
    """
    # table[b] holds counts for (a, b) with a the current first-sample size
    prev = [[1] for _ in range(n2 + 1)]  # a = 0: U is always 0
    for a in range(1, n1 + 1):
        cur = [[1]]  # b = 0
        for b in range(1, n2 + 1):
            size = a * b + 1
            row = [0] * size
            for u, c in enumerate(prev[b]):  # last element from sample 1: shift by b
                row[u + b] += c
            for u, c in enumerate(cur[b - 1]):
                row[u] += c
            cur.append(row)
        prev = cur
    return prev[n2]


def _exact_p(U: float, n1: int, n2: int) -> float:
    counts = u_null_counts(n1, n2)
    total = math.comb(n1 + n2, n1)
    u = int(round(U))
    lo = sum(counts[: u + 1]) / total
    hi = sum(counts[u:]) / total
    return min(1.0, 2.0 * min(lo, hi))


def mann_whitney(x: Sequence[float], y: Sequence[float]) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test; ``U`` is the statistic of ``x``.

    Exact null enumeration is used for n1+n2 <= 12 without ties, otherwise the
    normal approximation with tie correction and a 0.5 continuity correction.
    Effect size ``r = 1 - 2U/(n1*n2)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValidationError("mann_whitney needs two non-empty samples")
    ranks = sps.rankdata(np.concatenate([x, y]))
    U = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    _, tie_counts = np.unique(ranks, return_counts=True)
    has_ties = bool((tie_counts > 1).any())
    z = None
    if n <= EXACT_MAX_N and not has_ties:
        p = _exact_p(U, n1, n2)
        method = "exact"
    else:
        p, z = _normal_p(U, n1, n2, tie_counts)
        method = "normal-approx"
    return MannWhitneyResult(
        U, p, rank_biserial(U, n1, n2), method, n1, n2,
        float(np.median(x)), float(np.median(y)), z,
    )


def _normal_p(U: float, n1: int, n2: int, tie_counts=None) -> tuple[float, float]:
    n = n1 + n2
    tie_term = 0.0
    if tie_counts is not None and n > 1:
        t = np.asarray(tie_counts, dtype=float)
        tie_term = float((t**3 - t).sum()) / (n * (n - 1))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0, 0.0
    mu = n1 * n2 / 2.0
    z = max(abs(U - mu) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0))), z


def mann_whitney_normal_p(U: float, n1: int, n2: int) -> float:
    """Normal-approximation p for a tie-free sample (exposed for comparisons)."""
    return _normal_p(U, n1, n2)[0]


def mann_whitney_exact_p(U: float, n1: int, n2: int) -> float:
    return _exact_p(U, n1, n2)


@dataclass(frozen=True)
class AdjustedPValues:
    names: tuple[str, ...]
    raw: tuple[float, ...]
    adjusted: tuple[float, ...]
    method: str = "holm"


def holm_adjust(
    p_values: Sequence[float], names: Sequence[str] | None = None, method: str = "holm"
) -> AdjustedPValues:
    """Holm step-down (or plain Bonferroni) adjusted p-values in input order."""
    p = [float(v) for v in p_values]
    for v in p:
        if not 0 < v <= 1:
            raise ValidationError(f"p-value {v} outside (0, 1]")
    m = len(p)
    names = tuple(names) if names is not None else tuple(f"test{i}" for i in range(m))
    if len(names) != m:
        raise ValidationError("names and p-values differ in length")
    if method == "bonferroni":
        adj = [min(1.0, m * v) for v in p]
    elif method == "holm":
        order = sorted(range(m), key=lambda i: (p[i], i))
        adj = [0.0] * m
        running = 0.0
        for rank, i in enumerate(order):
            running = max(running, min(1.0, (m - rank) * p[i]))
            adj[i] = running
    else:
        raise ValidationError(f"unknown adjustment method {method!r}")
    return AdjustedPValues(names, tuple(p), tuple(adj), method)


@dataclass(frozen=True)
class PermanovaResult:
    pseudo_F: float
    p: float
    permutations: int
    ss_total: float
    ss_within: float
    ss_between: float
    method: str
    n_groups: int
    n: int


def _ss_terms(d2: np.ndarray, codes: np.ndarray, n_groups: int) -> tuple[float, float]:
    n = len(codes)
    ss_total = np.triu(d2, 1).sum() / n
    ss_within = 0.0
    for g in range(n_groups):
        idx = np.flatnonzero(codes == g)
        sub = d2[np.ix_(idx, idx)]
        ss_within += np.triu(sub, 1).sum() / len(idx)
    return float(ss_total), float(ss_within)


def _pseudo_f(ss_total: float, ss_within: float, n: int, g: int) -> float:
    return ((ss_total - ss_within) / (g - 1)) / (ss_within / (n - g))


def _label_arrangements(codes: np.ndarray):
    """All distinct assignments of the multiset ``codes`` to positions."""
    n = len(codes)
    sizes = np.bincount(codes)

    def rec(pos_left: tuple[int, ...], g: int):
        if g == len(sizes) - 1:
            yield {g: pos_left}
            return
        for chosen in itertools.combinations(pos_left, int(sizes[g])):
            rest = tuple(p for p in pos_left if p not in chosen)
            for tail in rec(rest, g + 1):
                yield {g: chosen, **tail}

    for assign in rec(tuple(range(n)), 0):
        out = np.empty(n, dtype=int)
        for g, pos in assign.items():
            out[list(pos)] = g
        yield out


def n_arrangements(group_sizes: Sequence[int]) -> int:
    total = math.factorial(sum(group_sizes))
    for s in group_sizes:
        total //= math.factorial(s)
    return total


def permanova(
    X: np.ndarray,
    labels: Sequence,
    permutations: int = 999,
    seed: int = 0,
    distance: str = "euclidean",
    exact: bool | None = None,
) -> PermanovaResult:
    """One-way PERMANOVA on a units x features matrix.

    With ``exact=None`` the null is fully enumerated when there are at most
    10,000 distinct label arrangements, otherwise ``permutations`` random
    relabelings are drawn and p = (hits + 1) / (B + 1).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ValidationError("labels and rows differ in length")
    levels = sorted(set(labels), key=str)
    if len(levels) < 2:
        raise ValidationError("permanova needs at least two groups")
    if permutations < 1:
        raise ValidationError("permutations must be >= 1")
    codes = np.array([levels.index(v) for v in labels])
    n, g = len(codes), len(levels)
    if n - g < 1:
        raise ValidationError("permanova needs more units than groups")
    d2 = squareform(pdist(X, metric=distance)) ** 2
    ss_t, ss_w = _ss_terms(d2, codes, g)
    if ss_w <= 1e-12 * max(ss_t, 1.0):
        raise ValidationError("degenerate within-group variance")
    f_obs = _pseudo_f(ss_t, ss_w, n, g)
    tol = 1e-9 * max(abs(f_obs), 1.0)

    sizes = np.bincount(codes)
    arrangements = n_arrangements(sizes)
    use_exact = arrangements <= EXACT_MAX_ARRANGEMENTS if exact is None else exact
    if use_exact:
        hits = total = 0
        for perm in _label_arrangements(codes):
            _, w = _ss_terms(d2, perm, g)
            f = _pseudo_f(ss_t, w, n, g) if w > 0 else math.inf
            hits += f >= f_obs - tol
            total += 1
        p, method, B = hits / total, "exact", total
    else:
        rng = np.random.default_rng(seed)
        hits = 0
        for _ in range(permutations):
            perm = rng.permutation(codes)
            _, w = _ss_terms(d2, perm, g)
            f = _pseudo_f(ss_t, w, n, g) if w > 0 else math.inf
            hits += f >= f_obs - tol
        p, method, B = (hits + 1) / (permutations + 1), "monte-carlo", permutations
    return PermanovaResult(f_obs, float(p), B, ss_t, ss_w, ss_t - ss_w, method, g, n)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValidationError("spearman needs equal-length inputs of size >= 2")
    rx, ry = sps.rankdata(x), sps.rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx**2).sum() * (ry**2).sum()))
    if denom == 0:
        raise ValidationError("zero rank variance")
    return float(np.clip((rx * ry).sum() / denom, -1.0, 1.0))


def bootstrap_ci(
    values: Sequence[float],
    statistic: Callable[[np.ndarray], float] = np.mean,
    B: int = 2000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise ValidationError("bootstrap_ci needs at least two values")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(v), size=(B, len(v)))
    reps = np.array([statistic(v[row]) for row in idx])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(reps, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def paired_t(x: Sequence[float], y: Sequence[float]) -> tuple[float, int, float]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ValidationError("paired_t needs equal-length inputs of size >= 2")
    d = x - y
    sd = d.std(ddof=1)
    if sd == 0:
        raise ValidationError("zero-variance differences")
    n = len(d)
    t = float(d.mean() / (sd / math.sqrt(n)))
    p = float(2.0 * sps.t.sf(abs(t), n - 1))
    return t, n - 1, min(1.0, p)
