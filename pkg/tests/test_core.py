import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssla.core import (
    BoundingBox,
    ParseError,
    RubricAssessment,
    Session,
    ValidationError,
    dump_detection_log,
    imbalance_ratio,
    kfold_splits,
    load_config,
    mask_regions,
    parse_detection_log,
    performance_group,
    plan_frame_samples,
    stratified_split,
)


def _line(**over):
    rec = {
        "session_id": "S1",
        "t": 3.2,
        "source": "model",
        "detections": [
            {"label": "Using Computer", "confidence": 0.9, "box": [0, 0, 10, 20]},
            {"label": "Other", "box": [5, 5, 15, 25]},
        ],
    }
    rec.update(over)
    return json.dumps(rec)


class TestParseLog:
    def test_one_line_two_detections_round_trip(self):
        frames = parse_detection_log((_line() + "\n").encode())
        assert len(frames) == 1
        assert len(frames[0].detections) == 2
        assert frames[0].detections[1].confidence is None
        again = parse_detection_log(dump_detection_log(frames))
        assert again == frames

    def test_empty_input(self):
        assert parse_detection_log(b"") == []
        assert parse_detection_log(b"\n\n") == []

    def test_confidence_out_of_range_names_field_and_line(self):
        bad = _line(detections=[{"label": "Other", "confidence": 1.3, "box": [0, 0, 1, 1]}])
        with pytest.raises(ParseError) as exc:
            parse_detection_log((_line() + "\n" + bad + "\n").encode())
        assert exc.value.line == 2
        assert "confidence" in str(exc.value) and "line 2" in str(exc.value)

    def test_unknown_label_named(self):
        bad = _line(detections=[{"label": "Juggling", "box": [0, 0, 1, 1]}])
        with pytest.raises(ValidationError, match="Juggling"):
            parse_detection_log(bad)

    def test_malformed_json_line_number(self):
        with pytest.raises(ParseError, match="line 3"):
            parse_detection_log(_line() + "\n\n{not json\n")

    def test_duplicate_keys_rejected(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_detection_log(_line() + "\n" + _line() + "\n")

    def test_input_order_kept(self):
        text = "\n".join(_line(t=t) for t in (5.0, 1.0, 3.0))
        assert [f.t for f in parse_detection_log(text)] == [5.0, 1.0, 3.0]

    def test_degenerate_box(self):
        with pytest.raises(ParseError, match="degenerate"):
            parse_detection_log(_line(detections=[{"label": "Other", "box": [5, 0, 5, 1]}]))


def test_load_config(tmp_path):
    doc = {
        "taxonomy": ["A", "B", "Sitting"],
        "spaces": [{"name": "bed", "x": 1, "y": 2, "zone": "primary"}],
        "thresholds": {"iou": 0.6},
        "sessions": [{"session_id": "S1", "scenario": "A", "duration_s": 100, "handover_s": 5}],
        "rubrics": [{"session_id": "S1", "T1": 5, "T2": 6, "T3": 7, "T4": 1, "T5": 2, "T6": 3}],
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    cfg = load_config(p)
    assert cfg.taxonomy.codes == ("A", "B", "Sitting")
    assert cfg.thresholds.iou == 0.6 and cfg.thresholds.mask_fraction == 0.2
    assert cfg.rubric_for("S1").T3 == 7
    doc["rubrics"][0]["T1"] = 8
    with pytest.raises(ValidationError, match="T1"):
        load_config(doc)


@pytest.mark.parametrize(
    "handover, duration, expected",
    [(60, 95, [60, 70, 80, 90]), (0, 10.0, [0]), (12, 52, [12, 22, 32, 42])],
)
def test_plan_frame_samples(handover, duration, expected):
    assert plan_frame_samples(Session("s", "A", duration, handover), 10) == expected


@given(
    st.floats(0, 500, allow_nan=False),
    st.floats(0.5, 600, allow_nan=False),
    st.floats(0.5, 30, allow_nan=False),
)
def test_plan_frame_samples_properties(handover, span, interval):
    s = Session("s", "A", handover + span, handover)
    ts = plan_frame_samples(s, interval)
    assert ts[0] == handover
    assert all(t < s.duration_s and t >= handover for t in ts)
    for a, b in zip(ts, ts[1:]):
        assert b - a == pytest.approx(interval, rel=1e-9, abs=1e-9)
    assert ts[-1] + interval >= s.duration_s - 1e-9


@pytest.mark.parametrize(
    "box, expected",
    [((0, 0, 100, 200), (0, 0, 100, 40)), ((10, 50, 20, 150), (10, 50, 20, 70))],
)
def test_mask_regions(box, expected):
    assert mask_regions([BoundingBox(*box)], 0.20)[0].as_tuple() == pytest.approx(expected)


def test_mask_full_fraction_is_identity():
    b = BoundingBox(3, 4, 50, 60)
    assert mask_regions([b], 1.0) == [b]


boxes = st.tuples(
    st.floats(0, 1000), st.floats(0, 1000), st.floats(1, 500), st.floats(1, 500)
).map(lambda v: BoundingBox(v[0], v[1], v[0] + v[2], v[1] + v[3]))


@given(boxes, st.floats(0.01, 1.0))
def test_mask_contained(box, fraction):
    (m,) = mask_regions([box], fraction)
    assert m.x1 == box.x1 and m.x2 == box.x2 and m.y1 == box.y1
    assert box.y1 < m.y2 <= box.y2


def test_stratified_split_single_class():
    res = stratified_split([(i, "A") for i in range(10)], seed=1)
    assert [len(s) for s in res.splits] == [7, 2, 1]


def test_stratified_split_two_classes():
    inst = [(f"a{i}", "A") for i in range(20)] + [(f"b{i}", "B") for i in range(10)]
    res = stratified_split(inst, seed=3)
    cls = dict(inst)
    per = [Counter(cls[i] for i in s) for s in res.splits]
    assert [p["A"] for p in per] == [14, 4, 2]
    assert [p["B"] for p in per] == [7, 2, 1]


def test_stratified_split_all_in_first():
    res = stratified_split([(i, "A") for i in range(5)], (1, 0, 0), seed=0)
    assert [len(s) for s in res.splits] == [5, 0, 0]


def test_stratified_split_tiny_class_warns():
    with pytest.warns(UserWarning):
        res = stratified_split([(0, "rare")] + [(i, "A") for i in range(1, 11)], seed=0)
    assert 0 in res.splits[0]
    assert res.warnings


@given(st.lists(st.sampled_from("ABC"), min_size=1, max_size=40), st.integers(0, 2**16))
@settings(max_examples=50)
def test_stratified_split_partition_and_determinism(classes, seed):
    inst = list(enumerate(classes))
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = stratified_split(inst, seed=seed)
        b = stratified_split(inst, seed=seed)
    assert a.splits == b.splits
    assert sorted(i for s in a.splits for i in s) == list(range(len(classes)))


def test_imbalance_ratio():
    assert imbalance_ratio({"A": 10, "B": 1}) == (10, True)
    assert imbalance_ratio({"A": 5, "B": 1}) == (5, False)
    assert imbalance_ratio({"A": 3, "B": 3}) == (1, False)
    with pytest.raises(ValidationError):
        imbalance_ratio({"A": 3, "B": 0})


@given(st.dictionaries(st.text(min_size=1, max_size=3), st.integers(1, 100), min_size=1, max_size=6), st.randoms())
def test_imbalance_ratio_label_order_invariant(counts, rnd):
    items = list(counts.items())
    rnd.shuffle(items)
    assert imbalance_ratio(dict(items)) == imbalance_ratio(counts)


def test_kfold():
    assert [len(f) for f in kfold_splits(list(range(10)), 5, seed=0)] == [2] * 5
    assert sorted(len(f) for f in kfold_splits(list(range(11)), 5, seed=0)) == [2, 2, 2, 2, 3]
    assert kfold_splits(list(range(11)), 5, seed=9) == kfold_splits(list(range(11)), 5, seed=9)
    with pytest.raises(ValidationError):
        kfold_splits([1, 2, 3], 5)


@given(st.integers(2, 8), st.integers(0, 30), st.integers(0, 1000))
def test_kfold_partition(k, extra, seed):
    ids = list(range(k + extra))
    folds = kfold_splits(ids, k, seed)
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert sorted(i for f in folds for i in f) == ids


def _rubric(task=(4, 4, 4), collab=(4, 4, 4)):
    return RubricAssessment("S", *task, *collab)


def test_performance_group_examples():
    assert performance_group(_rubric(task=(5, 6, 7)), "task").level == "High"
    g = performance_group(_rubric(collab=(1, 2, 3)), "collaboration")
    assert g.level == "Low" and not g.boundary
    g = performance_group(_rubric(task=(3, 3, 4)), "task")
    assert g.level == "Low" and g.boundary
    assert g.mean == pytest.approx(10 / 3)


@given(st.lists(st.integers(1, 7), min_size=3, max_size=3), st.integers(0, 2))
def test_performance_group_monotone(items, which):
    before = performance_group(_rubric(task=tuple(items)), "task")
    raised = list(items)
    raised[which] = min(7, raised[which] + 1)
    after = performance_group(_rubric(task=tuple(raised)), "task")
    assert not (before.is_high and not after.is_high)
