"""Nearest-centroid space assignment, spatial action codes and per-second timelines."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    SITTING,
    ActionTaxonomy,
    BoundingBox,
    FrameRecord,
    SpaceCentroid,
    SpaceMap,
    ValidationError,
)

PRIMARY_ONLY = ("Using Phone",)
OTHER = "Other"


def spatial_code_name(prefix: str, action: str) -> str:
    return f"{prefix}_{action.replace(' ', '_')}"


def default_spatial_codes(taxonomy: ActionTaxonomy | None = None) -> tuple[str, ...]:
    """prim_ for every non-Sitting action, sec_ for all but phone use (11 codes by default)."""
    taxonomy = taxonomy or ActionTaxonomy()
    base = taxonomy.without_sitting()
    prim = [spatial_code_name("prim", a) for a in base]
    sec = [spatial_code_name("sec", a) for a in base if a not in PRIMARY_ONLY]
    return tuple(prim + sec)


@dataclass(frozen=True)
class SpatialCoder:
    """Maps (action, zone) to a spatial code; None means the detection is filtered."""

    taxonomy: ActionTaxonomy
    codes: tuple[str, ...]
    distraction_prefix: str = "sec"
    transition_prefix: str = "sec"

    @classmethod
    def default(cls, taxonomy: ActionTaxonomy | None = None, **kw) -> "SpatialCoder":
        taxonomy = taxonomy or ActionTaxonomy()
        return cls(taxonomy, default_spatial_codes(taxonomy), **kw)

    def prefix_for(self, zone: str) -> str:
        if zone == "primary":
            return "prim"
        if zone == "secondary":
            return "sec"
        if zone == "distraction":
            return self.distraction_prefix
        if zone == "transition":
            return self.transition_prefix
        raise ValidationError(f"unknown zone {zone!r}")

    def code(self, action: str, zone: str) -> str | None:
        if action not in self.taxonomy:
            raise ValidationError(f"unknown action {action!r}")
        if action == SITTING:
            return None
        prefix = self.prefix_for(zone)
        other = spatial_code_name(prefix, OTHER)
        if zone == "transition":
            return other
        name = spatial_code_name(prefix, action)
        return name if name in self.codes else other


def spatial_code(action: str, zone: str, coder: SpatialCoder | None = None) -> str | None:
    return (coder or SpatialCoder.default()).code(action, zone)


def assign_space(box: BoundingBox, space_map: SpaceMap) -> SpaceCentroid:
    """Centroid nearest to the box midpoint; the earliest one wins ties."""
    mx, my = box.midpoint
    best, best_d = None, math.inf
    for c in space_map.centroids:
        d = (c.x - mx) ** 2 + (c.y - my) ** 2
        if d < best_d:
            best, best_d = c, d
    return best


@dataclass(frozen=True)
class TimelineMatrix:
    unit_id: str
    t0: int
    t1: int
    codes: tuple[str, ...]
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int8)
        if cells.ndim != 2 or cells.shape != (self.t1 - self.t0, len(self.codes)):
            raise ValidationError(
                f"timeline {self.unit_id}: cells shape {cells.shape} does not match "
                f"({self.t1 - self.t0}, {len(self.codes)})"
            )
        if not np.isin(cells, (0, 1)).all():
            raise ValidationError(f"timeline {self.unit_id}: cells must be binary")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def n_seconds(self) -> int:
        return self.t1 - self.t0

    def proportions(self) -> np.ndarray:
        return self.cells.mean(axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["second", *self.codes])
        for k, row in enumerate(self.cells):
            w.writerow([self.t0 + k, *map(int, row)])
        return buf.getvalue()


def read_timeline_csv(path: str | Path, unit_id: str | None = None) -> TimelineMatrix:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["second"]:
        raise ValidationError(f"{path}: timeline CSV must start with a 'second' column")
    codes = tuple(rows[0][1:])
    body = rows[1:]
    if not body:
        raise ValidationError(f"{path}: timeline has no rows")
    seconds = [int(r[0]) for r in body]
    if seconds != list(range(seconds[0], seconds[0] + len(seconds))):
        raise ValidationError(f"{path}: seconds must be contiguous")
    cells = np.array([[int(v) for v in r[1:]] for r in body], dtype=np.int8)
    return TimelineMatrix(unit_id or path.stem, seconds[0], seconds[-1] + 1, codes, cells)


def load_timelines(directory: str | Path) -> list[TimelineMatrix]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(directory)
    out = [read_timeline_csv(p) for p in sorted(directory.glob("*.csv"))]
    if not out:
        raise ValidationError(f"{directory}: no timeline CSV files")
    codes = out[0].codes
    for tl in out:
        if tl.codes != codes:
            raise ValidationError(f"timeline {tl.unit_id}: code columns differ from {out[0].unit_id}")
    return out


def code_detections(
    frame: FrameRecord,
    mode: str,
    space_map: SpaceMap | None = None,
    coder: SpatialCoder | None = None,
) -> list[tuple[str | None, SpaceCentroid | None]]:
    """Per-detection code (None when filtered) and the assigned centroid in spatial mode."""
    out = []
    for d in frame.detections:
        if mode == "plain":
            out.append((None if d.label == SITTING else d.label, None))
        elif mode == "spatial":
            if space_map is None:
                raise ValidationError("spatial mode needs a space map")
            c = assign_space(d.box, space_map)
            out.append((coder.code(d.label, c.zone), c))
        else:
            raise ValidationError(f"unknown timeline mode {mode!r}")
    return out


def build_timeline(
    frames: Sequence[FrameRecord],
    mode: str = "plain",
    space_map: SpaceMap | None = None,
    taxonomy: ActionTaxonomy | None = None,
    coder: SpatialCoder | None = None,
) -> TimelineMatrix:
    """Binary seconds x codes matrix for one session.

    Second ``s`` holds a 1 for code c when any detection in any frame with
    ``floor(t) == s`` codes to c. Seconds without frames stay all-zero.
    """
    if not frames:
        raise ValidationError("build_timeline needs at least one frame")
    sessions = {f.session_id for f in frames}
    if len(sessions) != 1:
        raise ValidationError(f"frames span several sessions: {sorted(sessions)}")
    taxonomy = taxonomy or ActionTaxonomy()
    if mode == "plain":
        codes = taxonomy.without_sitting()
    elif mode == "spatial":
        coder = coder or SpatialCoder.default(taxonomy)
        codes = coder.codes
    else:
        raise ValidationError(f"unknown timeline mode {mode!r}")
    col = {c: i for i, c in enumerate(codes)}
    secs = [math.floor(f.t) for f in frames]
    t0, t1 = min(secs), max(secs) + 1
    cells = np.zeros((t1 - t0, len(codes)), dtype=np.int8)
    for f, s in zip(frames, secs):
        for code, _ in code_detections(f, mode, space_map, coder):
            if code is not None:
                cells[s - t0, col[code]] = 1
    return TimelineMatrix(next(iter(sessions)), t0, t1, tuple(codes), cells)


def frames_by_session(frames: Iterable[FrameRecord]) -> dict[str, list[FrameRecord]]:
    out: dict[str, list[FrameRecord]] = {}
    for f in frames:
        out.setdefault(f.session_id, []).append(f)
    return {k: sorted(out[k], key=lambda f: f.t) for k in sorted(out)}
