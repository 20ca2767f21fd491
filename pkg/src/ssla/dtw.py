"""Scaling, resampling, band-constrained DTW, DBA prototypes and length selection."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .core import ValidationError
from .stats import spearman

THREADS_ENV = "SSLA_THREADS"


@dataclass(frozen=True)
class ChannelSeries:
    unit_id: str
    values: np.ndarray
    channels: tuple[str, ...]
    scaled: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] < 2 or v.shape[1] < 1:
            raise ValidationError(f"series {self.unit_id}: need T >= 2 and D >= 1, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError(f"series {self.unit_id}: non-finite values")
        if len(self.channels) != v.shape[1]:
            raise ValidationError(f"series {self.unit_id}: channel names do not match D")
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GlobalScaler:
    mean: np.ndarray
    sd: np.ndarray

    @property
    def zero_sd(self) -> np.ndarray:
        return self.sd == 0

    def apply(self, series: ChannelSeries) -> ChannelSeries:
        safe = np.where(self.sd == 0, 1.0, self.sd)
        return ChannelSeries(series.unit_id, (series.values - self.mean) / safe, series.channels, True)

    def invert(self, series: ChannelSeries) -> ChannelSeries:
        safe = np.where(self.sd == 0, 1.0, self.sd)
        return ChannelSeries(series.unit_id, series.values * safe + self.mean, series.channels, False)


def fit_scaler(sessions: Sequence[ChannelSeries]) -> GlobalScaler:
    """Pooled per-channel mean and population SD over every row of every session."""
    if not sessions:
        raise ValidationError("fit_scaler needs at least one session")
    rows = np.vstack([s.values for s in sessions])
    return GlobalScaler(rows.mean(axis=0), rows.std(axis=0, ddof=0))


def apply_scaler(scaler: GlobalScaler, series: ChannelSeries) -> ChannelSeries:
    return scaler.apply(series)


def resample(values: np.ndarray, length: int) -> np.ndarray:
    """Channel-wise linear interpolation at ``length`` evenly spaced positions over [0, T-1]."""
    if length < 2:
        raise ValidationError("target length must be >= 2")
    v = np.asarray(values, dtype=float)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    T = v.shape[0]
    if T == length:
        out = v.copy()
    else:
        pos = np.linspace(0.0, T - 1, length)
        src = np.arange(T, dtype=float)
        out = np.column_stack([np.interp(pos, src, v[:, d]) for d in range(v.shape[1])])
        out[0], out[-1] = v[0], v[-1]
    return out[:, 0] if squeeze else out


def default_band(length: int, fraction: float = 0.1) -> int:
    return int(math.ceil(fraction * length))


@nb.njit(cache=True, nogil=True)
def _dtw_table(a, b, radius):
    n, m = a.shape[0], b.shape[0]
    acc = np.full((n, m), np.inf)
    for i in range(n):
        center = i * m / n
        lo = max(0, int(math.ceil(center - radius - 1e-9)))
        hi = min(m - 1, int(math.floor(center + radius + 1e-9)))
        for j in range(lo, hi + 1):
            s = 0.0
            for d in range(a.shape[1]):
                diff = a[i, d] - b[j, d]
                s += diff * diff
            cost = math.sqrt(s)
            if i == 0 and j == 0:
                acc[i, j] = cost
                continue
            best = np.inf
            if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
                best = acc[i - 1, j - 1]
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = cost + best
    return acc


@nb.njit(cache=True, nogil=True)
def _backtrack(acc):
    n, m = acc.shape
    i, j = n - 1, m - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag = acc[i - 1, j - 1]
            up = acc[i - 1, j]
            left = acc[i, j - 1]
            # ties: diagonal, then the (1, 0) step, then (0, 1)
            if diag <= up and diag <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    return path[::-1]


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def dtw_distance(a, b, band_radius: float | None = None) -> tuple[float, list[tuple[int, int]]]:
    """DTW cost and one optimal warping path.

    Local cost is the Euclidean distance between rows, summed along the path
    with steps (1,0), (0,1), (1,1). Cells must satisfy
    ``|i * len(b) / len(a) - j| <= band_radius``; ``None`` means unconstrained.
    """
    a, b = _as_2d(a), _as_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValidationError("series must share the channel count")
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValidationError("empty series")
    radius = float(max(n, m)) if band_radius is None else float(band_radius)
    if radius < 0 or radius < abs(n - m):
        raise ValidationError(f"infeasible band radius {band_radius} for lengths {n}, {m}")
    acc = _dtw_table(np.ascontiguousarray(a), np.ascontiguousarray(b), radius)
    if not np.isfinite(acc[-1, -1]):
        raise ValidationError(f"infeasible band radius {band_radius} for lengths {n}, {m}")
    return float(acc[-1, -1]), [(int(i), int(j)) for i, j in _backtrack(acc)]


@dataclass(frozen=True)
class BarycenterPrototype:
    group: str
    values: np.ndarray
    iterations: int
    inertia: float
    inertia_trace: tuple[float, ...] = ()
    medoid: str = ""


def _inertia_and_paths(series, bary, radius):
    total, paths = 0.0, []
    for s in series:
        c, p = dtw_distance(s, bary, radius)
        total += c
        paths.append(p)
    return total, paths


def dba_barycenter(
    group: Sequence[ChannelSeries | np.ndarray],
    length: int,
    band_radius: float | None = None,
    max_iter: int = 30,
    tol: float = 1e-6,
    seed: int | None = None,
    tag: str = "",
    unit_ids: Sequence[str] | None = None,
) -> BarycenterPrototype:
    """DTW barycenter averaging from the group medoid.

    Each iteration aligns every series to the current barycenter and replaces
    each barycenter row with the mean of the rows mapped onto it. An update is
    accepted only if total DTW distance does not increase; iteration stops at
    ``max_iter`` or when the relative improvement falls below ``tol``.
    ``seed`` is accepted for interface symmetry; the procedure is deterministic.
    """
    if len(group) == 0:
        raise ValidationError("DBA needs a non-empty group")
    if unit_ids is None:
        unit_ids = [g.unit_id if isinstance(g, ChannelSeries) else f"{i:06d}" for i, g in enumerate(group)]
    raw = [g.values if isinstance(g, ChannelSeries) else _as_2d(g) for g in group]
    # canonical order makes the result independent of input order
    order = sorted(range(len(raw)), key=lambda i: (str(unit_ids[i]), i))
    series = [resample(raw[i], length) for i in order]
    ids = [str(unit_ids[i]) for i in order]
    radius = default_band(length) if band_radius is None else band_radius

    k = len(series)
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = dtw_distance(series[i], series[j], radius)[0]
    med = int(np.argmin(dist.sum(axis=1)))
    bary = series[med].copy()
    inertia, paths = _inertia_and_paths(series, bary, radius)
    trace = [inertia]
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        sums = np.zeros_like(bary)
        counts = np.zeros(length)
        for s, p in zip(series, paths):
            for i, j in p:
                sums[j] += s[i]
                counts[j] += 1
        candidate = sums / counts[:, None]
        new_inertia, new_paths = _inertia_and_paths(series, candidate, radius)
        if new_inertia > inertia:
            break
        improvement = (inertia - new_inertia) / inertia if inertia > 0 else 0.0
        bary, inertia, paths = candidate, new_inertia, new_paths
        trace.append(inertia)
        if improvement < tol:
            break
    return BarycenterPrototype(tag, bary, iterations, inertia, tuple(trace), ids[med])


@dataclass(frozen=True)
class DifferenceMap:
    values: np.ndarray
    channels: tuple[str, ...]


def difference_map(
    high: BarycenterPrototype, low: BarycenterPrototype, channels: Sequence[str] | None = None
) -> DifferenceMap:
    if high.values.shape != low.values.shape:
        raise ValidationError(f"prototype shapes differ: {high.values.shape} vs {low.values.shape}")
    d = high.values.shape[1]
    names = tuple(channels) if channels is not None else tuple(f"ch{i}" for i in range(d))
    return DifferenceMap(high.values - low.values, names)


def effect_profile(diff: DifferenceMap | np.ndarray) -> np.ndarray:
    """Mean signed High-Low difference per channel over normalized time."""
    v = diff.values if isinstance(diff, DifferenceMap) else np.asarray(diff, dtype=float)
    return v.mean(axis=0)


# ---------------------------------------------------------------------------
# bootstrap length selection


@dataclass(frozen=True)
class StabilityScore:
    sign_agreement: float
    rank_agreement: float

    @property
    def composite(self) -> float:
        return 0.5 * self.sign_agreement + 0.5 * self.rank_agreement


def stability(replicate: np.ndarray, baseline: np.ndarray, sign_threshold: float = 0.1) -> StabilityScore:
    """Weighted sign agreement on strong baseline channels plus rescaled Spearman rho."""
    replicate = np.asarray(replicate, float)
    baseline = np.asarray(baseline, float)
    strong = np.abs(baseline) >= sign_threshold
    if not strong.any():
        raise ValidationError("no stable channels: every baseline effect is below the sign threshold")
    w = np.abs(baseline[strong])
    agree = np.sign(replicate[strong]) == np.sign(baseline[strong])
    sign = float((w * agree).sum() / w.sum())
    if len(baseline) < 2:
        rank = sign
    else:
        try:
            rank = (spearman(replicate, baseline) + 1.0) / 2.0
        except ValidationError:
            rank = 0.5
    return StabilityScore(sign, rank)


@dataclass(frozen=True)
class LengthSelectionReport:
    candidates: tuple[int, ...]
    mean: tuple[float, ...]
    se: tuple[float, ...]
    sign_mean: tuple[float, ...]
    rank_mean: tuple[float, ...]
    baseline_length: int
    baseline_profile: np.ndarray
    chosen: int
    boot: int
    seed: int
    warnings: tuple[str, ...] = field(default_factory=tuple)


def group_profile(high, low, length: int, band_fraction: float = 0.1, max_iter: int = 30, tol: float = 1e-6):
    radius = default_band(length, band_fraction)
    ph = dba_barycenter(high, length, radius, max_iter, tol, tag="High")
    pl = dba_barycenter(low, length, radius, max_iter, tol, tag="Low")
    return ph, pl, effect_profile(difference_map(ph, pl))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def select_length(
    sessions: Sequence[ChannelSeries],
    high: Sequence[bool],
    candidates: Sequence[int],
    boot: int = 200,
    sign_threshold: float = 0.1,
    seed: int = 0,
    band_fraction: float = 0.1,
    max_iter: int = 30,
) -> LengthSelectionReport:
    """Choose a target length by bootstrap stability and the 1-SE rule.

    The baseline profile uses the median session length. Replicate ``b``
    resamples sessions within each group using seed ``seed + b``; the chosen
    length is the smallest candidate whose mean stability reaches the best
    mean minus its standard error.
    """
    if not candidates:
        raise ValidationError("no candidate lengths")
    if boot < 1:
        raise ValidationError("boot must be >= 1")
    high = np.asarray(high, dtype=bool)
    hi_idx = np.flatnonzero(high)
    lo_idx = np.flatnonzero(~high)
    if len(hi_idx) < 2 or len(lo_idx) < 2:
        raise ValidationError("both groups need at least two sessions")
    cands = tuple(sorted(int(c) for c in candidates))
    L0 = int(math.floor(float(np.median([s.length for s in sessions])) + 0.5))
    L0 = max(L0, 2)
    _, _, base = group_profile(
        [sessions[i] for i in hi_idx], [sessions[i] for i in lo_idx], L0, band_fraction, max_iter
    )
    if not (np.abs(base) >= sign_threshold).any():
        raise ValidationError("no stable channels: every baseline effect is below the sign threshold")

    def replicate(b: int):
        rng = np.random.default_rng(seed + b)
        hs = rng.choice(hi_idx, size=len(hi_idx), replace=True)
        ls = rng.choice(lo_idx, size=len(lo_idx), replace=True)
        # duplicate draws need distinct ids so DBA ordering stays canonical
        hg = [ChannelSeries(f"{sessions[i].unit_id}#{k}", sessions[i].values, sessions[i].channels) for k, i in enumerate(hs)]
        lg = [ChannelSeries(f"{sessions[i].unit_id}#{k}", sessions[i].values, sessions[i].channels) for k, i in enumerate(ls)]
        out = []
        for L in cands:
            _, _, prof = group_profile(hg, lg, L, band_fraction, max_iter)
            out.append(stability(prof, base, sign_threshold))
        return out

    n_threads = _threads()
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            reps = list(pool.map(replicate, range(boot)))
    else:
        reps = [replicate(b) for b in range(boot)]

    means, ses, sm, rm = [], [], [], []
    for c in range(len(cands)):
        comp = np.array([r[c].composite for r in reps])
        means.append(float(comp.mean()))
        ses.append(float(comp.std(ddof=1) / math.sqrt(len(comp))) if len(comp) > 1 else 0.0)
        sm.append(float(np.mean([r[c].sign_agreement for r in reps])))
        rm.append(float(np.mean([r[c].rank_agreement for r in reps])))
    best = int(np.argmax(means))
    cutoff = means[best] - ses[best]
    chosen = next(L for L, m in zip(cands, means) if m >= cutoff)
    return LengthSelectionReport(
        cands, tuple(means), tuple(ses), tuple(sm), tuple(rm), L0, base, chosen, boot, seed
    )
