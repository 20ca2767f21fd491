"""Deterministic synthetic fixtures: a two-rater reliability set and a small session corpus.

Run ``python -m ssla.synthetic OUTDIR`` to write them to disk.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .core import (
    DEFAULT_TAXONOMY,
    BoundingBox,
    Detection,
    FrameRecord,
    dump_detection_log,
)

# per-class (TP, FP, FN) from the reliability study's pilot double-coding
PILOT_COUNTS: dict[str, tuple[int, int, int]] = {
    "Using Computer": (50, 1, 2),
    "Doc/Note Interaction": (14, 2, 1),
    "Medi/Equip Interaction": (41, 5, 2),
    "Patient Interaction": (69, 12, 4),
    "Using Phone": (17, 2, 1),
    "Sitting": (44, 0, 0),
    "Other": (164, 9, 16),
}

PILOT_EXPECTED: dict[str, tuple[float, float, float]] = {
    "Overall": (0.928, 0.939, 0.933),
    "Using Computer": (0.980, 0.962, 0.971),
    "Doc/Note Interaction": (0.875, 0.933, 0.903),
    "Medi/Equip Interaction": (0.891, 0.953, 0.921),
    "Patient Interaction": (0.852, 0.945, 0.896),
    "Using Phone": (0.895, 0.944, 0.919),
    "Sitting": (1.000, 1.000, 1.000),
    "Other": (0.948, 0.911, 0.929),
}


def pilot_agreement_fixture(n_frames: int = 100) -> tuple[list[FrameRecord], list[FrameRecord]]:
    """Two rater logs whose instance agreement realizes PILOT_COUNTS exactly.

    Every slot occupies its own grid cell, so only the intended pairs overlap.
    Rater B's boxes are shifted a few pixels so matched IoUs vary in (0.8, 1).
    """
    slots = []
    for label, (tp, fp, fn) in PILOT_COUNTS.items():
        slots += [(label, "pair")] * tp + [(label, "b_only")] * fp + [(label, "a_only")] * fn
    per_frame: list[list] = [[] for _ in range(n_frames)]
    for k, slot in enumerate(slots):
        per_frame[k % n_frames].append(slot)
    frames_a, frames_b = [], []
    for f, items in enumerate(per_frame):
        da, db = [], []
        for cell, (label, kind) in enumerate(items):
            x = 40.0 + 160.0 * (cell % 10)
            y = 40.0 + 200.0 * (cell // 10)
            box = BoundingBox(x, y, x + 100.0, y + 150.0)
            shift = 2.0 + (f + cell) % 5
            moved = BoundingBox(x + shift, y + shift / 2, x + 100.0 + shift, y + 150.0 + shift / 2)
            if kind in ("pair", "a_only"):
                da.append(Detection(label, box))
            if kind in ("pair", "b_only"):
                db.append(Detection(label, moved))
        t = float(10 * f)
        frames_a.append(FrameRecord("pilot", t, "rater_a", tuple(da)))
        frames_b.append(FrameRecord("pilot", t, "rater_b", tuple(db)))
    return frames_a, frames_b


SPACES = [
    {"name": "Bed 4", "x": 1500.0, "y": 520.0, "zone": "primary"},
    {"name": "MET phone", "x": 1760.0, "y": 300.0, "zone": "primary"},
    {"name": "Bed 1", "x": 180.0, "y": 520.0, "zone": "secondary"},
    {"name": "Bed 2", "x": 520.0, "y": 520.0, "zone": "secondary"},
    {"name": "IV station 1", "x": 340.0, "y": 260.0, "zone": "secondary"},
    {"name": "IV station 2", "x": 1200.0, "y": 260.0, "zone": "secondary"},
    {"name": "Bed 3", "x": 880.0, "y": 520.0, "zone": "distraction"},
    {"name": "Corridor", "x": 1000.0, "y": 900.0, "zone": "transition"},
]

_PLACES = {
    "Bed 4": (1500.0, 520.0),
    "MET phone": (1760.0, 300.0),
    "Bed 1": (180.0, 520.0),
    "Bed 2": (520.0, 520.0),
    "Bed 3": (880.0, 520.0),
    "Corridor": (1000.0, 900.0),
}


def _student_action(rng, phase: float, high: bool) -> tuple[str, str]:
    """Pick (action, place) for one student at normalized time ``phase``."""
    phone_p = 0.05 if high else (0.35 if 0.2 <= phase <= 0.55 else 0.1)
    patient_p = (0.45 if phase > 0.4 else 0.25) if high else 0.2
    r = rng.random()
    if r < phone_p:
        return "Using Phone", "MET phone"
    r -= phone_p
    if r < patient_p:
        return "Patient Interaction", "Bed 4" if high or rng.random() < 0.6 else "Bed 2"
    r -= patient_p
    rest = [
        ("Medi/Equip Interaction", "Bed 4" if high else "Bed 1"),
        ("Using Computer", "Bed 4" if rng.random() < 0.5 else "Bed 2"),
        ("Doc/Note Interaction", "Bed 4" if high else "Bed 1"),
        ("Other", "Corridor" if rng.random() < 0.5 else "Bed 3"),
    ]
    return rest[int(rng.integers(0, len(rest)))]


def synthetic_corpus(seed: int = 7, n_sessions: int = 8) -> tuple[list[FrameRecord], dict]:
    """Eight short sessions at ~1 fps with group-dependent behaviour, plus a study config."""
    rng = np.random.default_rng(seed)
    frames: list[FrameRecord] = []
    sessions, rubrics = [], []
    task_high = [i < n_sessions // 2 for i in range(n_sessions)]
    collab_high = [i in (0, 1, 2, n_sessions // 2) for i in range(n_sessions)]
    for s in range(n_sessions):
        sid = f"S{s + 1:02d}"
        duration = float(150 + 10 * int(rng.integers(0, 8)))
        handover = float(int(rng.integers(0, 15)))
        sessions.append({"session_id": sid, "scenario": "A", "duration_s": duration, "handover_s": handover})
        hi_t = [5, 6, 6] if task_high[s] else [2, 3, 2]
        hi_c = [6, 5, 7] if collab_high[s] else [3, 2, 3]
        rubrics.append({"session_id": sid, **dict(zip(("T1", "T2", "T3"), hi_t)), **dict(zip(("T4", "T5", "T6"), hi_c))})
        t = handover
        while t < duration:
            phase = (t - handover) / (duration - handover)
            dets = []
            for _ in range(4):
                if rng.random() < 0.15:
                    continue
                action, place = _student_action(rng, phase, task_high[s])
                cx, cy = _PLACES[place]
                cx += float(rng.normal(0, 25))
                cy += float(rng.normal(0, 25))
                x1, y1 = max(0.0, cx - 40), max(0.0, cy - 90)
                dets.append(Detection(action, BoundingBox(round(x1, 1), round(y1, 1), round(x1 + 80, 1), round(y1 + 180, 1))))
            if rng.random() < 0.3:
                dets.append(Detection("Sitting", BoundingBox(850.0, 430.0, 910.0, 560.0)))
            frames.append(FrameRecord(sid, round(t, 2), "model", tuple(dets)))
            t += 1.0
    config = {
        "taxonomy": list(DEFAULT_TAXONOMY),
        "spaces": SPACES,
        "thresholds": {"iou": 0.5, "mask_fraction": 0.2, "imbalance_limit": 5.0},
        "sessions": sessions,
        "rubrics": rubrics,
    }
    return frames, config


def write_fixtures(outdir: str | Path, seed: int = 7) -> dict[str, Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    a, b = pilot_agreement_fixture()
    paths = {
        "rater_a": out / "irr_rater_a.jsonl",
        "rater_b": out / "irr_rater_b.jsonl",
        "corpus": out / "corpus.jsonl",
        "config": out / "study.json",
    }
    paths["rater_a"].write_text(dump_detection_log(a), encoding="utf-8")
    paths["rater_b"].write_text(dump_detection_log(b), encoding="utf-8")
    frames, cfg = synthetic_corpus(seed)
    paths["corpus"].write_text(dump_detection_log(frames), encoding="utf-8")
    paths["config"].write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    return paths


if __name__ == "__main__":  # pragma: no cover
    for name, p in write_fixtures(sys.argv[1] if len(sys.argv) > 1 else "fixtures").items():
        print(f"{name}: {p}")
