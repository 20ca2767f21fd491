"""Epistemic network accumulation, means rotation and group networks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .core import ValidationError
from .spatial import TimelineMatrix
from .stats import MannWhitneyResult, mann_whitney


def code_pairs(codes: Sequence[str]) -> list[tuple[str, str]]:
    return list(combinations(codes, 2))


@dataclass(frozen=True)
class ConnectionVector:
    unit_id: str
    codes: tuple[str, ...]
    values: np.ndarray
    normalized: bool = False
    zero: bool = False

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return code_pairs(self.codes)


def accumulate_connections(timeline: TimelineMatrix, window: int = 6) -> ConnectionVector:
    """Moving-stanza co-occurrence counts over the upper triangle of code pairs.

    At second t the stanza is rows max(0, t-window+1)..t. Pair (i, j) scores 1
    when the current row has i and the stanza has j, or vice versa.
    """
    if window < 1:
        raise ValidationError("window must be >= 1")
    cells = np.asarray(timeline.cells, dtype=bool)
    if cells.shape[0] == 0:
        raise ValidationError("empty timeline")
    k = cells.shape[1]
    iu, ju = np.triu_indices(k, 1)
    # stanza[t] = OR of rows t-window+1..t, via a running count
    csum = np.vstack([np.zeros((1, k), dtype=np.int64), np.cumsum(cells, axis=0)])
    t = np.arange(cells.shape[0])
    start = np.maximum(0, t - window + 1)
    stanza = (csum[t + 1] - csum[start]) > 0
    hit = (cells[:, iu] & stanza[:, ju]) | (cells[:, ju] & stanza[:, iu])
    values = hit.sum(axis=0).astype(float)
    return ConnectionVector(timeline.unit_id, tuple(timeline.codes), values)


def sphere_normalize(v: ConnectionVector) -> ConnectionVector:
    norm = float(np.linalg.norm(v.values))
    if norm == 0.0:
        return ConnectionVector(v.unit_id, v.codes, v.values.copy(), True, True)
    return ConnectionVector(v.unit_id, v.codes, v.values / norm, True, False)


@dataclass(frozen=True)
class EnaSpace:
    unit_ids: tuple[str, ...]
    high: np.ndarray
    center: np.ndarray
    axes: np.ndarray
    singular_values: np.ndarray
    points: np.ndarray

    def group_scores(self, dim: int = 1) -> tuple[np.ndarray, np.ndarray]:
        col = self.points[:, dim - 1]
        return col[self.high], col[~self.high]


def _orient(v: np.ndarray) -> np.ndarray:
    # deterministic SVD sign: largest-magnitude component positive
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


def means_rotation(
    vectors: Sequence[ConnectionVector] | np.ndarray,
    high: Sequence[bool],
    residual_dims: int = 1,
    unit_ids: Sequence[str] | None = None,
) -> EnaSpace:
    """Project units onto the High-Low mean axis plus SVD residual axes.

    Axis 1 points from the Low mean to the High mean, so the High group sits
    on the positive side. Residual axes are right singular vectors of the data
    after the axis-1 component is removed.
    """
    if isinstance(vectors, np.ndarray):
        V = np.asarray(vectors, dtype=float)
        ids = tuple(unit_ids) if unit_ids is not None else tuple(str(i) for i in range(len(V)))
    else:
        V = np.vstack([v.values for v in vectors]).astype(float)
        ids = tuple(v.unit_id for v in vectors)
    high = np.asarray(high, dtype=bool)
    if V.shape[0] < 2 or len(high) != V.shape[0]:
        raise ValidationError("means_rotation needs >= 2 labelled units")
    if high.all() or not high.any():
        raise ValidationError("both groups must be non-empty")
    if residual_dims < 1:
        raise ValidationError("residual_dims must be >= 1")

    center = V.mean(axis=0)
    X = V - center
    diff = X[high].mean(axis=0) - X[~high].mean(axis=0)
    norm = np.linalg.norm(diff)
    if norm < 1e-12:
        raise ValidationError("degenerate rotation: group means are equal")
    a1 = diff / norm

    X_def = X - np.outer(X @ a1, a1)
    _, s, vt = np.linalg.svd(X_def, full_matrices=True)
    s_full = np.concatenate([s, np.zeros(vt.shape[0] - len(s))])
    axes = [a1]
    svals = []
    for row, sv in zip(vt, s_full):
        if len(axes) - 1 >= residual_dims:
            break
        w = row.copy()
        for a in axes:
            w -= (w @ a) * a
        wn = np.linalg.norm(w)
        if wn < 1e-9:
            continue
        axes.append(_orient(w / wn))
        svals.append(float(sv))
    A = np.vstack(axes)
    return EnaSpace(ids, high, center, A, np.asarray(svals), X @ A.T)


@dataclass(frozen=True)
class NetworkGraph:
    codes: tuple[str, ...]
    weights: np.ndarray
    kind: str
    label: str = ""

    @property
    def edges(self) -> list[tuple[str, str, float]]:
        return [(a, b, float(w)) for (a, b), w in zip(code_pairs(self.codes), self.weights)]

    def matrix(self) -> np.ndarray:
        k = len(self.codes)
        m = np.zeros((k, k))
        iu = np.triu_indices(k, 1)
        m[iu] = self.weights
        return m + m.T


def group_networks(
    vectors: Sequence[ConnectionVector], high: Sequence[bool]
) -> tuple[NetworkGraph, NetworkGraph, NetworkGraph]:
    high = np.asarray(high, dtype=bool)
    if high.all() or not high.any():
        raise ValidationError("both groups must be non-empty")
    codes = vectors[0].codes
    V = np.vstack([v.values for v in vectors]).astype(float)
    mh = V[high].mean(axis=0)
    ml = V[~high].mean(axis=0)
    return (
        NetworkGraph(codes, mh, "group-mean", "High"),
        NetworkGraph(codes, ml, "group-mean", "Low"),
        NetworkGraph(codes, mh - ml, "difference", "High-Low"),
    )


@dataclass(frozen=True)
class ProjectionComparison:
    dim: int
    test: MannWhitneyResult
    median_high: float
    median_low: float
    n_high: int
    n_low: int


def compare_projection(space: EnaSpace, dim: int = 1) -> ProjectionComparison:
    """Mann-Whitney between High (first sample) and Low scores on axis ``dim``."""
    if not 1 <= dim <= space.points.shape[1]:
        raise ValidationError(f"dimension {dim} not in projection")
    hi, lo = space.group_scores(dim)
    res = mann_whitney(hi, lo)
    return ProjectionComparison(
        dim, res, float(np.median(hi)), float(np.median(lo)), len(hi), len(lo)
    )


def circle_layout(n: int) -> list[tuple[float, float]]:
    """Unit-circle node positions, first node at 12 o'clock, clockwise."""
    return [
        (math.sin(2 * math.pi * i / n), -math.cos(2 * math.pi * i / n)) for i in range(n)
    ]
