"""Domain types, log/config ingestion, sampling plans, splits and mask geometry."""

from __future__ import annotations

import io
import json
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

DEFAULT_TAXONOMY: tuple[str, ...] = (
    "Using Computer",
    "Doc/Note Interaction",
    "Using Phone",
    "Medi/Equip Interaction",
    "Sitting",
    "Patient Interaction",
    "Other",
)

SITTING = "Sitting"
ZONES = ("primary", "secondary", "distraction", "transition")
TASK_ITEMS = ("T1", "T2", "T3")
COLLAB_ITEMS = ("T4", "T5", "T6")
HIGH_CUTOFF = 3.5


class ValidationError(ValueError):
    """Input violates a type invariant or a documented precondition."""


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not _finite(self.x1, self.y1, self.x2, self.y2):
            raise ValidationError(f"non-finite box coordinates {self.as_tuple()}")
        if min(self.x1, self.y1) < 0:
            raise ValidationError(f"negative box coordinates {self.as_tuple()}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValidationError(f"degenerate box {self.as_tuple()}: need x2>x1 and y2>y1")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def midpoint(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class Detection:
    label: str
    box: BoundingBox
    confidence: float | None = None

    def __post_init__(self):
        if self.confidence is not None:
            c = self.confidence
            if not (math.isfinite(c) and 0.0 <= c <= 1.0):
                raise ValidationError(f"confidence {c} outside [0, 1]")


@dataclass(frozen=True)
class FrameRecord:
    session_id: str
    t: float
    source: str
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.t) or self.t < 0:
            raise ValidationError(f"frame time must be finite and >= 0, got {self.t}")

    @property
    def key(self) -> tuple[str, float]:
        return (self.session_id, self.t)


@dataclass(frozen=True)
class ActionTaxonomy:
    codes: tuple[str, ...] = DEFAULT_TAXONOMY

    def __post_init__(self):
        if not self.codes:
            raise ValidationError("taxonomy is empty")
        dup = [c for c, n in Counter(self.codes).items() if n > 1]
        if dup:
            raise ValidationError(f"duplicate taxonomy codes: {dup}")

    def __contains__(self, code: object) -> bool:
        return code in self.codes

    def __iter__(self):
        return iter(self.codes)

    def __len__(self) -> int:
        return len(self.codes)

    def index(self, code: str) -> int:
        return self.codes.index(code)

    def without_sitting(self) -> tuple[str, ...]:
        return tuple(c for c in self.codes if c != SITTING)


@dataclass(frozen=True)
class Session:
    session_id: str
    scenario: str
    duration_s: float
    handover_s: float = 0.0

    def __post_init__(self):
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ValidationError(f"session {self.session_id}: duration_s must be > 0")
        if not (0 <= self.handover_s < self.duration_s):
            raise ValidationError(
                f"session {self.session_id}: need 0 <= handover_s < duration_s"
            )


@dataclass(frozen=True)
class SpaceCentroid:
    name: str
    x: float
    y: float
    zone: str

    def __post_init__(self):
        if self.zone not in ZONES:
            raise ValidationError(f"centroid {self.name}: unknown zone {self.zone!r}")
        if not _finite(self.x, self.y):
            raise ValidationError(f"centroid {self.name}: non-finite position")


@dataclass(frozen=True)
class SpaceMap:
    centroids: tuple[SpaceCentroid, ...]

    def __post_init__(self):
        if not self.centroids:
            raise ValidationError("space map is empty")
        names = [c.name for c in self.centroids]
        dup = [n for n, k in Counter(names).items() if k > 1]
        if dup:
            raise ValidationError(f"duplicate centroid names: {dup}")
        if not any(c.zone == "primary" for c in self.centroids):
            raise ValidationError("space map needs at least one primary-zone centroid")


@dataclass(frozen=True)
class RubricAssessment:
    session_id: str
    T1: int
    T2: int
    T3: int
    T4: int
    T5: int
    T6: int

    def __post_init__(self):
        for item in TASK_ITEMS + COLLAB_ITEMS:
            v = getattr(self, item)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or not 1 <= v <= 7:
                raise ValidationError(
                    f"rubric {self.session_id}: {item}={v!r} is not an integer in [1, 7]"
                )

    def items(self, dimension: str) -> tuple[int, int, int]:
        names = _dimension_items(dimension)
        return tuple(getattr(self, n) for n in names)


@dataclass(frozen=True)
class PerformanceGroup:
    dimension: str
    level: str
    mean: float
    boundary: bool = False

    @property
    def is_high(self) -> bool:
        return self.level == "High"


@dataclass(frozen=True)
class Thresholds:
    iou: float = 0.5
    mask_fraction: float = 0.20
    imbalance_limit: float = 5.0


@dataclass(frozen=True)
class StudyConfig:
    taxonomy: ActionTaxonomy = field(default_factory=ActionTaxonomy)
    spaces: SpaceMap | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)
    sessions: tuple[Session, ...] = ()
    rubrics: tuple[RubricAssessment, ...] = ()

    def rubric_for(self, session_id: str) -> RubricAssessment | None:
        for r in self.rubrics:
            if r.session_id == session_id:
                return r
        return None


# ---------------------------------------------------------------------------
# ingestion


def _read_text(source: bytes | str | Path | IO) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _num(value, name: str, line: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"field {name!r} must be a number, got {value!r}", line)
    return float(value)


def _parse_detection(raw, taxonomy: ActionTaxonomy, line: int, k: int) -> Detection:
    if not isinstance(raw, dict):
        raise ParseError(f"detections[{k}] is not an object", line)
    label = raw.get("label")
    if not isinstance(label, str):
        raise ParseError(f"detections[{k}].label missing or not a string", line)
    if label not in taxonomy:
        raise ParseError(f"detections[{k}].label: unknown taxonomy code {label!r}", line)
    box = raw.get("box")
    if not isinstance(box, list) or len(box) != 4:
        raise ParseError(f"detections[{k}].box must be [x1, y1, x2, y2]", line)
    coords = [_num(v, f"detections[{k}].box", line) for v in box]
    conf = raw.get("confidence")
    if conf is not None:
        conf = _num(conf, f"detections[{k}].confidence", line)
        if not 0.0 <= conf <= 1.0:
            raise ParseError(f"field detections[{k}].confidence={conf} outside [0, 1]", line)
    try:
        return Detection(label=label, box=BoundingBox(*coords), confidence=conf)
    except ValidationError as exc:
        raise ParseError(f"detections[{k}]: {exc}", line) from None


def parse_detection_log(
    source: bytes | str | Path | IO, taxonomy: ActionTaxonomy | None = None
) -> list[FrameRecord]:
    """Parse a newline-delimited JSON detection log.

    Each non-blank line holds ``session_id``, ``t``, ``source`` and a
    ``detections`` array of ``{label, confidence?, box: [x1, y1, x2, y2]}``.
    Records are returned in input order; errors carry the 1-based line number.
    """
    taxonomy = taxonomy or ActionTaxonomy()
    frames: list[FrameRecord] = []
    seen: set[tuple[str, float, str]] = set()
    for lineno, text in enumerate(io.StringIO(_read_text(source)), start=1):
        text = text.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed record: {exc.msg}", lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("record is not an object", lineno)
        sid = obj.get("session_id")
        if not isinstance(sid, str):
            raise ParseError("field 'session_id' missing or not a string", lineno)
        src = obj.get("source")
        if not isinstance(src, str):
            raise ParseError("field 'source' missing or not a string", lineno)
        t = _num(obj.get("t"), "t", lineno)
        raw_dets = obj.get("detections", [])
        if not isinstance(raw_dets, list):
            raise ParseError("field 'detections' must be an array", lineno)
        dets = tuple(_parse_detection(d, taxonomy, lineno, k) for k, d in enumerate(raw_dets))
        try:
            frame = FrameRecord(session_id=sid, t=t, source=src, detections=dets)
        except ValidationError as exc:
            raise ParseError(str(exc), lineno) from None
        key = (sid, t, src)
        if key in seen:
            raise ParseError(f"duplicate frame key {key}", lineno)
        seen.add(key)
        frames.append(frame)
    return frames


def frame_to_dict(frame: FrameRecord) -> dict:
    dets = []
    for d in frame.detections:
        rec = {"label": d.label}
        if d.confidence is not None:
            rec["confidence"] = d.confidence
        rec["box"] = list(d.box.as_tuple())
        dets.append(rec)
    return {"session_id": frame.session_id, "t": frame.t, "source": frame.source, "detections": dets}


def dump_detection_log(frames: Iterable[FrameRecord]) -> str:
    return "".join(json.dumps(frame_to_dict(f), separators=(",", ":")) + "\n" for f in frames)


def load_config(source: str | Path | Mapping) -> StudyConfig:
    """Build a StudyConfig from a JSON document (path, text or mapping)."""
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        path = Path(source)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: malformed config ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ValidationError("config must be an object")

    taxonomy = ActionTaxonomy(tuple(doc.get("taxonomy") or DEFAULT_TAXONOMY))
    spaces = None
    if doc.get("spaces"):
        spaces = SpaceMap(
            tuple(
                SpaceCentroid(str(s["name"]), float(s["x"]), float(s["y"]), str(s["zone"]))
                for s in doc["spaces"]
            )
        )
    th = doc.get("thresholds") or {}
    thresholds = Thresholds(
        iou=float(th.get("iou", 0.5)),
        mask_fraction=float(th.get("mask_fraction", 0.20)),
        imbalance_limit=float(th.get("imbalance_limit", 5.0)),
    )
    sessions = tuple(
        Session(
            str(s["session_id"]),
            str(s.get("scenario", "")),
            float(s["duration_s"]),
            float(s.get("handover_s", 0.0)),
        )
        for s in doc.get("sessions") or ()
    )
    try:
        rubrics = tuple(
            RubricAssessment(str(r["session_id"]), *(r[k] for k in TASK_ITEMS + COLLAB_ITEMS))
            for r in doc.get("rubrics") or ()
        )
    except KeyError as exc:
        raise ValidationError(f"rubric missing item {exc}") from None
    return StudyConfig(taxonomy, spaces, thresholds, sessions, rubrics)


def config_to_dict(cfg: StudyConfig) -> dict:
    return {
        "taxonomy": list(cfg.taxonomy.codes),
        "spaces": [
            {"name": c.name, "x": c.x, "y": c.y, "zone": c.zone}
            for c in (cfg.spaces.centroids if cfg.spaces else ())
        ],
        "thresholds": {
            "iou": cfg.thresholds.iou,
            "mask_fraction": cfg.thresholds.mask_fraction,
            "imbalance_limit": cfg.thresholds.imbalance_limit,
        },
        "sessions": [
            {"session_id": s.session_id, "scenario": s.scenario,
             "duration_s": s.duration_s, "handover_s": s.handover_s}
            for s in cfg.sessions
        ],
        "rubrics": [
            {"session_id": r.session_id, **{k: getattr(r, k) for k in TASK_ITEMS + COLLAB_ITEMS}}
            for r in cfg.rubrics
        ],
    }


# ---------------------------------------------------------------------------
# sampling, masking, splitting


def plan_frame_samples(session: Session, interval_s: float = 10.0) -> list[float]:
    """Timestamps every ``interval_s`` from handover, half-open at the session end."""
    if not interval_s > 0:
        raise ValidationError("interval_s must be > 0")
    out = []
    k = 0
    while True:
        t = session.handover_s + k * interval_s
        if t >= session.duration_s:
            break
        out.append(t)
        k += 1
    return out


def mask_regions(boxes: Iterable[BoundingBox | Detection], fraction: float = 0.20) -> list[BoundingBox]:
    """Upper ``fraction`` of each person box (image y grows downward)."""
    if not 0 < fraction <= 1:
        raise ValidationError("mask fraction must be in (0, 1]")
    out = []
    for b in boxes:
        if isinstance(b, Detection):
            b = b.box
        if fraction == 1:
            out.append(b)
            continue
        out.append(BoundingBox(b.x1, b.y1, b.x2, b.y1 + fraction * (b.y2 - b.y1)))
    return out


def largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    quotas = [n * r for r in ratios]
    # guard against 6.9999999 style float error before flooring
    base = [int(math.floor(q + 1e-9)) for q in quotas]
    left = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order:
        if left <= 0:
            break
        if ratios[i] > 0:
            base[i] += 1
            left -= 1
    return base


@dataclass(frozen=True)
class SplitResult:
    splits: tuple[tuple, ...]
    warnings: tuple[str, ...] = ()


def stratified_split(
    instances: Sequence[tuple[object, str]],
    ratios: Sequence[float] = (0.70, 0.20, 0.10),
    seed: int = 0,
) -> SplitResult:
    """Per-class shuffled split with largest-remainder rounding of ``ratios``."""
    if any(r < 0 for r in ratios) or not any(r > 0 for r in ratios):
        raise ValidationError("ratios must be non-negative with at least one positive")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must sum to 1, got {sum(ratios)}")
    by_class: dict[str, list] = defaultdict(list)
    for ident, cls in instances:
        by_class[cls].append(ident)
    rng = np.random.default_rng(seed)
    splits: list[list] = [[] for _ in ratios]
    notes = []
    nonzero = sum(1 for r in ratios if r > 0)
    for cls in sorted(by_class):
        ids = by_class[cls]
        if len(ids) < nonzero:
            notes.append(
                f"class {cls!r} has {len(ids)} instance(s) for {nonzero} non-empty splits; "
                "remainder assigned to the largest split"
            )
        counts = largest_remainder(len(ids), ratios)
        order = rng.permutation(len(ids))
        pos = 0
        for s, c in enumerate(counts):
            splits[s].extend(ids[i] for i in order[pos:pos + c])
            pos += c
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return SplitResult(tuple(tuple(s) for s in splits), tuple(notes))


def imbalance_ratio(counts: Mapping[str, int], limit: float = 5.0) -> tuple[float, bool]:
    if not counts:
        raise ValidationError("no class counts given")
    zero = [k for k, v in counts.items() if v <= 0]
    if zero:
        raise ValidationError(f"imbalance ratio undefined: zero count for {sorted(zero)}")
    ratio = max(counts.values()) / min(counts.values())
    return float(ratio), ratio > limit


def kfold_splits(ids: Sequence, k: int = 5, seed: int = 0) -> list[list]:
    if k < 2:
        raise ValidationError("k must be >= 2")
    if len(ids) < k:
        raise ValidationError(f"need at least k={k} ids, got {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    return [[ids[i] for i in chunk] for chunk in np.array_split(order, k)]


def _dimension_items(dimension: str) -> tuple[str, ...]:
    if dimension == "task":
        return TASK_ITEMS
    if dimension == "collaboration":
        return COLLAB_ITEMS
    raise ValidationError(f"unknown performance dimension {dimension!r}")


def performance_group(assessment: RubricAssessment, dimension: str) -> PerformanceGroup:
    """High when the dimension's item mean is >= 3.5; means strictly inside (3, 4) are flagged."""
    mean = sum(assessment.items(dimension)) / 3.0
    level = "High" if mean >= HIGH_CUTOFF else "Low"
    return PerformanceGroup(dimension, level, mean, boundary=3.0 < mean < 4.0)
