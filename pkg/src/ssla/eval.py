"""Box matching, inter-rater reliability and detector evaluation."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import ActionTaxonomy, BoundingBox, Detection, FrameRecord, ValidationError

COCO_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
KAPPA_GATE = 0.80
MIOU_GATE = 0.70


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_a: tuple[int, ...]
    unmatched_b: tuple[int, ...]


def match_instances(
    set_a: Sequence[Detection],
    set_b: Sequence[Detection],
    iou_threshold: float = 0.5,
    class_agnostic: bool = True,
) -> MatchResult:
    """Greedy one-to-one matching in descending IoU order.

    Ties are broken by lower index in ``set_a`` then lower index in ``set_b``.
    With ``class_agnostic=False`` only same-label pairs are candidates.
    """
    cands = []
    for i, da in enumerate(set_a):
        for j, db in enumerate(set_b):
            if not class_agnostic and da.label != db.label:
                continue
            v = iou(da.box, db.box)
            if v >= iou_threshold and v > 0:
                cands.append((-v, i, j))
    cands.sort()
    used_a, used_b, pairs = set(), set(), []
    for neg, i, j in cands:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j, -neg))
    return MatchResult(
        tuple(pairs),
        tuple(i for i in range(len(set_a)) if i not in used_a),
        tuple(j for j in range(len(set_b)) if j not in used_b),
    )


# ---------------------------------------------------------------------------
# inter-rater reliability


@dataclass(frozen=True)
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else math.nan

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else math.nan

    @property
    def f1(self) -> float:
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else math.nan


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    degenerate: bool = False
    n: int = 0


def cohen_kappa(label_pairs: Iterable[tuple[str, str]]) -> KappaResult:
    """Cohen's kappa from paired labels.

    When both raters use one identical label throughout, chance agreement is 1
    and kappa is reported as 1 with ``degenerate=True``.
    """
    pairs = list(label_pairs)
    if not pairs:
        raise ValidationError("cohen_kappa needs at least one label pair")
    n = len(pairs)
    p_o = sum(a == b for a, b in pairs) / n
    ca = Counter(a for a, _ in pairs)
    cb = Counter(b for _, b in pairs)
    p_e = sum(ca[k] * cb.get(k, 0) for k in ca) / (n * n)
    if math.isclose(p_e, 1.0, abs_tol=1e-15):
        return KappaResult(1.0, True, n)
    return KappaResult((p_o - p_e) / (1.0 - p_e), False, n)


@dataclass(frozen=True)
class IrrReport:
    classes: tuple[str, ...]
    per_class: dict[str, ClassCounts]
    overall: ClassCounts
    kappa: KappaResult
    mean_iou: float
    n_frames: int
    warnings: tuple[str, ...] = ()

    @property
    def gates(self) -> dict[str, bool]:
        return {
            "kappa": bool(self.kappa.kappa >= KAPPA_GATE),
            "mean_iou": bool(self.mean_iou >= MIOU_GATE),
        }

    def rows(self) -> list[tuple[str, ClassCounts]]:
        return [("Overall", self.overall)] + [(c, self.per_class[c]) for c in self.classes]


def _index_frames(frames: Iterable[FrameRecord]) -> dict[tuple[str, float], FrameRecord]:
    out = {}
    for f in frames:
        if f.key in out:
            raise ValidationError(f"frame {f.key} appears twice in one rater log")
        out[f.key] = f
    return out


def irr_report(
    frames_a: Iterable[FrameRecord],
    frames_b: Iterable[FrameRecord],
    iou_threshold: float = 0.5,
    taxonomy: ActionTaxonomy | None = None,
) -> IrrReport:
    """Instance-level agreement between rater A (reference) and rater B.

    Boxes are matched class-agnostically per frame. A matched pair with equal
    labels is a TP of that class; a mislabeled pair is one FP (B's label) and
    one FN (A's label); unmatched boxes in B are FP and in A are FN. Frames
    present in only one log count as empty for the other rater.
    """
    taxonomy = taxonomy or ActionTaxonomy()
    ia, ib = _index_frames(frames_a), _index_frames(frames_b)
    common = set(ia) & set(ib)
    if not common:
        raise ValidationError("the two rater logs share no frames")
    notes = []
    only = len(set(ia) ^ set(ib))
    if only:
        notes.append(f"{only} frame(s) present in only one rater log; treated as empty for the other")

    tp, fp, fn = Counter(), Counter(), Counter()
    label_pairs, ious = [], []
    for key in sorted(set(ia) | set(ib)):
        da = ia[key].detections if key in ia else ()
        db = ib[key].detections if key in ib else ()
        m = match_instances(da, db, iou_threshold, class_agnostic=True)
        for i, j, v in m.pairs:
            la, lb = da[i].label, db[j].label
            label_pairs.append((la, lb))
            ious.append(v)
            if la == lb:
                tp[la] += 1
            else:
                fp[lb] += 1
                fn[la] += 1
        for j in m.unmatched_b:
            fp[db[j].label] += 1
        for i in m.unmatched_a:
            fn[da[i].label] += 1

    classes = tuple(taxonomy.codes)
    per_class = {c: ClassCounts(tp[c], fp[c], fn[c]) for c in classes}
    overall = ClassCounts(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    if label_pairs:
        kappa = cohen_kappa(label_pairs)
    else:
        kappa = KappaResult(math.nan, True, 0)
        notes.append("no matched pairs; kappa undefined")
    if kappa.degenerate and label_pairs:
        notes.append("kappa computed on degenerate marginals (single shared label)")
    mean_iou = float(np.mean(ious)) if ious else math.nan
    return IrrReport(classes, per_class, overall, kappa, mean_iou, len(common), tuple(notes))


# ---------------------------------------------------------------------------
# detector evaluation


@dataclass(frozen=True)
class PrCurve:
    label: str
    confidence: tuple[float, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    ap: float | None
    n_gt: int

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.confidence, self.precision, self.recall))


def average_precision(precision: Sequence[float], recall: Sequence[float]) -> float:
    """All-points interpolated AP under the monotone precision envelope."""
    if len(precision) == 0:
        return 0.0
    r = np.concatenate(([0.0], np.asarray(recall, float)))
    p = np.concatenate(([0.0], np.asarray(precision, float)))
    env = np.maximum.accumulate(p[::-1])[::-1]
    return float(np.sum(np.diff(r) * env[1:]))


def _paired_frames(pred: Iterable[FrameRecord], gt: Iterable[FrameRecord]):
    ip = _index_frames(pred)
    ig = _index_frames(gt)
    for key in sorted(set(ip) | set(ig)):
        yield (
            key,
            ip[key].detections if key in ip else (),
            ig[key].detections if key in ig else (),
        )


def _score_class(pairs, label: str, iou_threshold: float):
    """Rank detections of ``label`` and flag each as TP/FP; returns (conf, tp, n_gt)."""
    dets = []  # (-conf, order, frame_idx, box)
    gts = []
    order = 0
    for fi, (_, pd, gd) in enumerate(pairs):
        for d in pd:
            if d.label == label:
                if d.confidence is None:
                    raise ValidationError("prediction without confidence")
                dets.append((-d.confidence, order, fi, d.box))
                order += 1
        gts.append([g.box for g in gd if g.label == label])
    dets.sort(key=lambda x: (x[0], x[1]))
    used = [[False] * len(g) for g in gts]
    conf, hit = [], []
    for neg, _, fi, box in dets:
        best, best_k = -1.0, -1
        for k, g in enumerate(gts[fi]):
            if used[fi][k]:
                continue
            v = iou(box, g)
            if v >= iou_threshold and v > best:
                best, best_k = v, k
        if best_k >= 0:
            used[fi][best_k] = True
        conf.append(-neg)
        hit.append(best_k >= 0)
    return conf, hit, sum(len(g) for g in gts)


def pr_curve(
    predictions: Iterable[FrameRecord],
    ground_truth: Iterable[FrameRecord],
    label: str,
    iou_threshold: float = 0.5,
) -> PrCurve:
    """Precision-recall curve and AP for one class.

    ``ap`` is None when the class has neither ground truth nor detections.
    """
    pairs = list(_paired_frames(predictions, ground_truth))
    return _pr_from_pairs(pairs, label, iou_threshold)


def _pr_from_pairs(pairs, label: str, iou_threshold: float) -> PrCurve:
    conf, hit, n_gt = _score_class(pairs, label, iou_threshold)
    if not conf:
        return PrCurve(label, (), (), (), None if n_gt == 0 else 0.0, n_gt)
    tp = np.cumsum(hit)
    fp = np.cumsum(np.logical_not(hit))
    precision = tp / (tp + fp)
    recall = tp / n_gt if n_gt else np.zeros_like(precision, dtype=float)
    ap = average_precision(precision, recall) if n_gt else 0.0
    return PrCurve(
        label, tuple(conf), tuple(map(float, precision)), tuple(map(float, recall)), ap, n_gt
    )


def map_range(
    predictions: Iterable[FrameRecord],
    ground_truth: Iterable[FrameRecord],
    labels: Sequence[str],
    thresholds: Sequence[float] = COCO_THRESHOLDS,
) -> tuple[dict[str, float | None], float]:
    """Per-class AP averaged over IoU ``thresholds``, and its macro mean."""
    pairs = list(_paired_frames(predictions, ground_truth))
    per_class: dict[str, float | None] = {}
    for c in labels:
        aps = [_pr_from_pairs(pairs, c, t).ap for t in thresholds]
        per_class[c] = None if aps[0] is None else float(np.mean(aps))
    defined = [v for v in per_class.values() if v is not None]
    return per_class, float(np.mean(defined)) if defined else 0.0


def confusion_matrix(
    predictions: Iterable[FrameRecord],
    ground_truth: Iterable[FrameRecord],
    labels: Sequence[str],
    conf_threshold: float = 0.25,
    iou_threshold: float = 0.5,
    normalize: bool = True,
) -> np.ndarray:
    """(K+1)x(K+1) matrix; rows are predicted classes, columns true classes.

    Index K is background: unmatched ground truth lands in row K, unmatched
    detections in column K. Normalization divides each column by its sum.
    """
    k = len(labels)
    pos = {c: i for i, c in enumerate(labels)}
    mat = np.zeros((k + 1, k + 1), dtype=float)
    for _, pd, gd in _paired_frames(predictions, ground_truth):
        kept = [d for d in pd if d.confidence is None or d.confidence >= conf_threshold]
        m = match_instances(gd, kept, iou_threshold, class_agnostic=True)
        for i, j, _ in m.pairs:
            mat[pos[kept[j].label], pos[gd[i].label]] += 1
        for i in m.unmatched_a:
            mat[k, pos[gd[i].label]] += 1
        for j in m.unmatched_b:
            mat[pos[kept[j].label], k] += 1
    if normalize:
        sums = mat.sum(axis=0)
        nz = sums > 0
        mat[:, nz] = mat[:, nz] / sums[nz]
    return mat


@dataclass(frozen=True)
class ClassDetMetrics:
    precision: float
    recall: float
    ap50: float | None
    ap50_95: float | None
    n_gt: int


@dataclass(frozen=True)
class DetEvalReport:
    labels: tuple[str, ...]
    per_class: dict[str, ClassDetMetrics]
    mean_precision: float
    mean_recall: float
    map50: float
    map50_95: float
    confusion: np.ndarray
    curves: dict[str, PrCurve] = field(default_factory=dict)


def evaluate_detections(
    predictions: Sequence[FrameRecord],
    ground_truth: Sequence[FrameRecord],
    labels: Sequence[str],
    conf_threshold: float = 0.25,
    iou_threshold: float = 0.5,
) -> DetEvalReport:
    """Per-class P/R at ``conf_threshold``, AP@0.5, AP@[0.5:0.95] and the confusion matrix."""
    pairs = list(_paired_frames(predictions, ground_truth))
    per_class, curves = {}, {}
    for c in labels:
        curve = _pr_from_pairs(pairs, c, iou_threshold)
        curves[c] = curve
        aps = [_pr_from_pairs(pairs, c, t).ap for t in COCO_THRESHOLDS]
        ap_range = None if aps[0] is None else float(np.mean(aps))
        keep = [i for i, v in enumerate(curve.confidence) if v >= conf_threshold]
        if keep:
            last = keep[-1]
            p, r = curve.precision[last], curve.recall[last]
        else:
            p, r = 0.0, 0.0
        per_class[c] = ClassDetMetrics(p, r, curve.ap, ap_range, curve.n_gt)

    def _mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else 0.0

    scored = [c for c in labels if per_class[c].ap50 is not None]
    cm = confusion_matrix(predictions, ground_truth, labels, conf_threshold, iou_threshold)
    return DetEvalReport(
        tuple(labels),
        per_class,
        _mean(per_class[c].precision for c in scored),
        _mean(per_class[c].recall for c in scored),
        _mean(per_class[c].ap50 for c in scored),
        _mean(per_class[c].ap50_95 for c in scored),
        cm,
        curves,
    )

