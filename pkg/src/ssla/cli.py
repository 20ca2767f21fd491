"""Command-line front end.

Exit codes: 0 success, 1 validation or input error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings as warnings_module
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .core import (
    ActionTaxonomy,
    StudyConfig,
    ValidationError,
    config_to_dict,
    imbalance_ratio,
    load_config,
    mask_regions,
    parse_detection_log,
    performance_group,
    plan_frame_samples,
    stratified_split,
)
from .dtw import (
    ChannelSeries,
    default_band,
    difference_map,
    dba_barycenter,
    effect_profile,
    fit_scaler,
    select_length,
)
from .ena import accumulate_connections, compare_projection, group_networks, means_rotation, sphere_normalize
from .eval import evaluate_detections, irr_report
from .spatial import (
    SpatialCoder,
    build_timeline,
    code_detections,
    frames_by_session,
    load_timelines,
)
from .stats import holm_adjust, mann_whitney, permanova
from .svg import emit_confusion_svg, emit_heatmap_svg, emit_network_svg, emit_pr_svg


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# output helpers


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(doc) -> str:
    return json.dumps(jsonable(doc), indent=2, allow_nan=False) + "\n"


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if isinstance(v, float) and not math.isfinite(v) else _cell(v) for v in r])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}" if abs(float(v)) >= 1e-4 or v == 0 else f"{float(v):.6e}"
    return v


def run_report(command: str, args: argparse.Namespace, results: dict, warnings: list[str]) -> dict:
    echo = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    return {
        "tool": "ssla",
        "version": __version__,
        "command": command,
        "config": echo,
        "results": results,
        "warnings": list(warnings),
    }


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(path)
    return p


def _read_log(path: str, taxonomy: ActionTaxonomy | None = None):
    return parse_detection_log(_existing(path).read_bytes(), taxonomy)


def _config(path: str | None) -> StudyConfig:
    return load_config(_existing(path)) if path else StudyConfig()


def _fmt3(v: float) -> str:
    return "" if not math.isfinite(v) else f"{v:.3f}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_irr(args) -> int:
    cfg = _config(args.config)
    a = _read_log(args.a, cfg.taxonomy)
    b = _read_log(args.b, cfg.taxonomy)
    rep = irr_report(a, b, args.iou, cfg.taxonomy)
    rows = [
        (name, c.tp, c.fp, c.fn, _fmt3(c.precision), _fmt3(c.recall), _fmt3(c.f1))
        for name, c in rep.rows()
    ]
    write_atomic(args.out, csv_text(["class", "TP", "FP", "FN", "P", "R", "F1"], rows))
    if args.report:
        results = {
            "rows": [
                {"class": n, "TP": c.tp, "FP": c.fp, "FN": c.fn,
                 "P": c.precision, "R": c.recall, "F1": c.f1}
                for n, c in rep.rows()
            ],
            "kappa": rep.kappa.kappa,
            "kappa_degenerate": rep.kappa.degenerate,
            "mean_iou": rep.mean_iou,
            "gates": rep.gates,
            "frames": rep.n_frames,
        }
        write_atomic(args.report, dump_json(run_report("irr", args, results, list(rep.warnings))))
    return 0


def cmd_eval_det(args) -> int:
    cfg = _config(args.config)
    pred = _read_log(args.pred, cfg.taxonomy)
    gt = _read_log(args.gt, cfg.taxonomy)
    labels = list(cfg.taxonomy.codes)
    rep = evaluate_detections(pred, gt, labels, args.conf, args.iou)
    rows = []
    for c in labels:
        m = rep.per_class[c]
        rows.append((c, m.n_gt, m.precision, m.recall,
                     math.nan if m.ap50 is None else m.ap50,
                     math.nan if m.ap50_95 is None else m.ap50_95))
    rows.append(("all", sum(rep.per_class[c].n_gt for c in labels), rep.mean_precision,
                 rep.mean_recall, rep.map50, rep.map50_95))
    write_atomic(args.out, csv_text(["class", "instances", "P", "R", "AP50", "AP50_95"], rows))
    if args.confusion:
        names = labels + ["background"]
        crow = [(names[i], *rep.confusion[i]) for i in range(len(names))]
        write_atomic(args.confusion, csv_text(["predicted\\true", *names], crow))
    if args.svg:
        write_atomic(args.svg, emit_pr_svg(rep.curves))
    if args.confusion_svg:
        write_atomic(args.confusion_svg, emit_confusion_svg(rep.confusion, labels))
    return 0


def cmd_assign_spaces(args) -> int:
    cfg = _config(args.config)
    if cfg.spaces is None:
        raise ValidationError(f"{args.config}: config defines no spaces")
    coder = SpatialCoder.default(cfg.taxonomy, distraction_prefix=args.distraction)
    frames = _read_log(args.log, cfg.taxonomy)
    lines = []
    for f in frames:
        for d, (code, c) in zip(f.detections, code_detections(f, "spatial", cfg.spaces, coder)):
            rec = {
                "session_id": f.session_id, "t": f.t, "source": f.source, "label": d.label,
                "box": list(d.box.as_tuple()), "space": c.name, "zone": c.zone, "code": code,
            }
            if d.confidence is not None:
                rec["confidence"] = d.confidence
            lines.append(json.dumps(rec, separators=(",", ":")))
    write_atomic(args.out, "".join(s + "\n" for s in lines))
    return 0


def cmd_timeline(args) -> int:
    cfg = _config(args.config)
    if args.mode == "spatial" and cfg.spaces is None:
        raise ValidationError("spatial timelines need a config with spaces")
    coder = SpatialCoder.default(cfg.taxonomy, distraction_prefix=args.distraction)
    frames = _read_log(args.log, cfg.taxonomy)
    sessions = frames_by_session(frames)
    if args.session:
        if args.session not in sessions:
            raise ValidationError(f"session {args.session!r} not in log")
        sessions = {args.session: sessions[args.session]}
    if not sessions:
        raise ValidationError("log contains no frames")
    if args.out and len(sessions) > 1:
        raise UsageError("log holds several sessions; use --out-dir or --session")
    for sid, fr in sessions.items():
        tl = build_timeline(fr, args.mode, cfg.spaces, cfg.taxonomy, coder)
        target = Path(args.out) if args.out else Path(args.out_dir) / f"{sid}.csv"
        write_atomic(target, tl.to_csv())
    return 0


def _groups(cfg: StudyConfig, unit_ids: Sequence[str], dimension: str, warnings: list[str]):
    high = []
    for uid in unit_ids:
        r = cfg.rubric_for(uid)
        if r is None:
            raise ValidationError(f"no rubric for session {uid!r}")
        g = performance_group(r, dimension)
        if g.boundary:
            warnings.append(f"{uid}: {dimension} mean {g.mean:.3f} lies between the 1-3 and 4-7 bands")
        high.append(g.is_high)
    return np.array(high, dtype=bool)


def cmd_ena(args) -> int:
    cfg = _config(args.groups)
    tls = load_timelines(_existing(args.timelines))
    warnings: list[str] = []
    high = _groups(cfg, [t.unit_id for t in tls], args.dimension, warnings)
    vecs = []
    for t in tls:
        v = sphere_normalize(accumulate_connections(t, args.window))
        if v.zero:
            warnings.append(f"{t.unit_id}: no connections accumulated (zero vector)")
        vecs.append(v)
    space = means_rotation(vecs, high, args.residual_dims)
    cmp = compare_projection(space, 1)
    g_hi, g_lo, g_diff = group_networks(vecs, high)
    codes = tls[0].codes
    results = {
        "dimension": args.dimension,
        "window": args.window,
        "codes": list(codes),
        "points": [
            {"unit_id": u, "group": "High" if h else "Low", "coords": list(p)}
            for u, h, p in zip(space.unit_ids, space.high, space.points)
        ],
        "axes_singular_values": space.singular_values,
        "mr1": {
            "U": cmp.test.U, "p": cmp.test.p_raw, "r": cmp.test.r, "method": cmp.test.method,
            "median_high": cmp.median_high, "median_low": cmp.median_low,
            "n_high": cmp.n_high, "n_low": cmp.n_low,
        },
        "edges": [
            {"a": a, "b": b, "high": wh, "low": wl, "difference": wd}
            for (a, b, wh), (_, _, wl), (_, _, wd) in zip(g_hi.edges, g_lo.edges, g_diff.edges)
        ],
    }
    write_atomic(args.out, dump_json(run_report("ena", args, results, warnings)))
    if args.svg:
        write_atomic(args.svg, emit_network_svg([g_hi, g_lo, g_diff]))
    return 0


def _series(tls) -> list[ChannelSeries]:
    return [ChannelSeries(t.unit_id, t.cells.astype(float), tuple(t.codes)) for t in tls]


def cmd_dtw(args) -> int:
    cfg = _config(args.groups)
    tls = load_timelines(_existing(args.timelines))
    warnings: list[str] = []
    high = _groups(cfg, [t.unit_id for t in tls], args.dimension, warnings)
    raw = _series(tls)
    scaler = fit_scaler(raw)
    channels = tuple(tls[0].codes)
    for name, z in zip(channels, scaler.zero_sd):
        if z:
            warnings.append(f"channel {name}: zero standard deviation; centred only")
    scaled = [scaler.apply(s) for s in raw]
    try:
        lengths = [int(v) for v in args.lengths.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--lengths must be comma-separated integers, got {args.lengths!r}") from None
    if not lengths or min(lengths) < 2:
        raise UsageError("--lengths needs integers >= 2")
    sel = select_length(scaled, high, lengths, args.boot, args.sign_threshold, args.seed, args.band)
    L = sel.chosen
    radius = default_band(L, args.band)
    hi = [s for s, h in zip(scaled, high) if h]
    lo = [s for s, h in zip(scaled, high) if not h]
    ph = dba_barycenter(hi, L, radius, tag="High")
    pl = dba_barycenter(lo, L, radius, tag="Low")
    diff = difference_map(ph, pl, channels)
    prof = effect_profile(diff)
    results = {
        "dimension": args.dimension,
        "channels": list(channels),
        "scaler": {"mean": scaler.mean, "sd": scaler.sd},
        "length_selection": {
            "candidates": sel.candidates, "mean": sel.mean, "se": sel.se,
            "sign_agreement": sel.sign_mean, "rank_agreement": sel.rank_mean,
            "baseline_length": sel.baseline_length, "baseline_profile": sel.baseline_profile,
            "chosen": sel.chosen, "boot": sel.boot, "seed": sel.seed,
        },
        "band_radius": radius,
        "prototypes": {
            "High": {"n": len(hi), "iterations": ph.iterations, "inertia_trace": ph.inertia_trace,
                     "medoid": ph.medoid, "values": ph.values},
            "Low": {"n": len(lo), "iterations": pl.iterations, "inertia_trace": pl.inertia_trace,
                    "medoid": pl.medoid, "values": pl.values},
        },
        "difference": diff.values,
        "effect_profile": dict(zip(channels, prof)),
    }
    write_atomic(args.out, dump_json(run_report("dtw", args, results, warnings)))
    if args.svg:
        write_atomic(args.svg, emit_heatmap_svg(ph.values, pl.values, diff.values, channels,
                                                title=f"{args.dimension} performance, L={L}"))
    return 0


def cmd_stats(args) -> int:
    cfg = _config(args.groups)
    tls = load_timelines(_existing(args.timelines))
    warnings: list[str] = []
    high = _groups(cfg, [t.unit_id for t in tls], args.dimension, warnings)
    if high.sum() < 1 or (~high).sum() < 1:
        raise ValidationError("both performance groups must be non-empty")
    codes = list(tls[0].codes)
    X = np.vstack([t.proportions() if args.features == "proportions" else t.cells.sum(axis=0) for t in tls]).astype(float)
    tests = [mann_whitney(X[high, k], X[~high, k]) for k in range(len(codes))]
    adj = holm_adjust([t.p_raw for t in tests], codes, args.adjust)
    rows = [
        (c, t.U, t.p_raw, a, t.r, float(X[high, k].mean()), float(X[~high, k].mean()))
        for k, (c, t, a) in enumerate(zip(codes, tests, adj.adjusted))
    ]
    perm = permanova(X, ["High" if h else "Low" for h in high], args.permutations, args.seed)
    text = csv_text(["code", "U", "p_raw", "p_adj", "r", "mean_high", "mean_low"], rows)
    text += "\n" + csv_text(
        ["permanova", "pseudo_F", "p", "permutations", "method", "ss_total", "ss_within", "ss_between"],
        [("", perm.pseudo_F, perm.p, perm.permutations, perm.method,
          perm.ss_total, perm.ss_within, perm.ss_between)],
    )
    write_atomic(args.out, text)
    if args.report:
        results = {
            "mode": args.mode, "dimension": args.dimension, "adjustment": args.adjust,
            "tests": [
                {"code": c, "U": t.U, "p_raw": t.p_raw, "p_adj": a, "r": t.r, "method": t.method,
                 "mean_high": float(X[high, k].mean()), "mean_low": float(X[~high, k].mean())}
                for k, (c, t, a) in enumerate(zip(codes, tests, adj.adjusted))
            ],
            "permanova": {
                "pseudo_F": perm.pseudo_F, "p": perm.p, "permutations": perm.permutations,
                "method": perm.method, "ss_total": perm.ss_total, "ss_within": perm.ss_within,
                "ss_between": perm.ss_between,
            },
        }
        write_atomic(args.report, dump_json(run_report("stats", args, results, warnings)))
    return 0


def cmd_sample_frames(args) -> int:
    cfg = _config(args.config)
    if not cfg.sessions:
        raise ValidationError(f"{args.config}: config defines no sessions")
    rows = [(s.session_id, f"{t:g}") for s in cfg.sessions for t in plan_frame_samples(s, args.interval)]
    write_atomic(args.out, csv_text(["session_id", "t"], rows))
    return 0


def cmd_split(args) -> int:
    path = _existing(args.instances)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "class"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: needs 'id' and 'class' columns")
        inst = [(r["id"], r["class"]) for r in reader]
    try:
        ratios = tuple(float(v) for v in args.ratios.split(","))
    except ValueError:
        raise UsageError(f"--ratios must be comma-separated numbers, got {args.ratios!r}") from None
    with warnings_module.catch_warnings():
        # surfaced below through res.warnings
        warnings_module.simplefilter("ignore")
        res = stratified_split(inst, ratios, args.seed)
    names = ("train", "val", "test") if len(ratios) == 3 else tuple(f"split{i}" for i in range(len(ratios)))
    rows = [(i, names[s]) for s, ids in enumerate(res.splits) for i in ids]
    write_atomic(args.out, csv_text(["id", "split"], rows))
    counts = {}
    for _, c in inst:
        counts[c] = counts.get(c, 0) + 1
    warnings = list(res.warnings)
    if counts:
        ratio, flag = imbalance_ratio(counts, args.imbalance_limit)
        if flag:
            warnings.append(f"class imbalance {ratio:.2f}:1 exceeds {args.imbalance_limit:g}:1")
    if args.report:
        results = {"counts": counts, "sizes": [len(s) for s in res.splits]}
        write_atomic(args.report, dump_json(run_report("split", args, results, warnings)))
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_mask(args) -> int:
    cfg = _config(args.config)
    frames = _read_log(args.log, cfg.taxonomy)
    wanted = set(args.labels.split(",")) if args.labels else None
    rows = []
    for f in frames:
        dets = [d for d in f.detections if wanted is None or d.label in wanted]
        for d, m in zip(dets, mask_regions(dets, args.fraction)):
            rows.append((f.session_id, f"{f.t:g}", d.label, *m.as_tuple()))
    write_atomic(args.out, csv_text(["session_id", "t", "label", "x1", "y1", "x2", "y2"], rows))
    return 0


def cmd_report(args) -> int:
    runs, warnings = [], []
    for p in args.inputs:
        doc = json.loads(_existing(p).read_text(encoding="utf-8"))
        runs.append({"source": p, **doc})
        warnings += [f"{doc.get('command', p)}: {w}" for w in doc.get("warnings", [])]
    cfg = config_to_dict(_config(args.config)) if args.config else None
    out = {"tool": "ssla", "version": __version__, "study_config": cfg, "runs": runs, "warnings": warnings}
    write_atomic(args.out, dump_json(out))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ssla", description="Classroom action-log analytics.")
    p.add_argument("--version", action="version", version=f"ssla {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("irr", help="inter-rater reliability between two annotation logs")
    s.add_argument("--a", required=True, help="reference rater log")
    s.add_argument("--b", required=True, help="second rater log")
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_irr)

    s = sub.add_parser("eval-det", help="detector evaluation against ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--config")
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--conf", type=float, default=0.25)
    s.add_argument("--out", required=True)
    s.add_argument("--svg")
    s.add_argument("--confusion", help="CSV path for the normalized confusion matrix")
    s.add_argument("--confusion-svg")
    s.set_defaults(func=cmd_eval_det)

    s = sub.add_parser("assign-spaces", help="nearest-centroid spaces and spatial codes per detection")
    s.add_argument("--log", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--distraction", choices=("sec", "prim"), default="sec")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_assign_spaces)

    s = sub.add_parser("timeline", help="per-second binary timelines")
    s.add_argument("--log", required=True)
    s.add_argument("--config")
    s.add_argument("--mode", choices=("plain", "spatial"), default="plain")
    s.add_argument("--distraction", choices=("sec", "prim"), default="sec")
    s.add_argument("--session")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--out")
    g.add_argument("--out-dir")
    s.set_defaults(func=cmd_timeline)

    for name, fn, help_ in (
        ("ena", cmd_ena, "epistemic network analysis over timelines"),
        ("dtw", cmd_dtw, "DTW barycenter prototypes and length selection"),
        ("stats", cmd_stats, "Mann-Whitney per code, Holm adjustment and PERMANOVA"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--timelines", required=True, help="directory of timeline CSVs")
        s.add_argument("--groups", required=True, help="study config with rubrics")
        s.add_argument("--dimension", choices=("task", "collaboration"), default="task")
        s.add_argument("--seed", type=int, default=7)
        s.add_argument("--out", required=True)
        s.set_defaults(func=fn)
        if name == "ena":
            s.add_argument("--window", type=int, default=6)
            s.add_argument("--residual-dims", type=int, default=1)
            s.add_argument("--svg")
        elif name == "dtw":
            s.add_argument("--lengths", default="100,200,300,500,700")
            s.add_argument("--band", type=float, default=0.1, help="band radius as a fraction of L")
            s.add_argument("--boot", type=int, default=200)
            s.add_argument("--sign-threshold", type=float, default=0.1)
            s.add_argument("--svg")
        else:
            s.add_argument("--mode", choices=("plain", "spatial"), default="spatial")
            s.add_argument("--permutations", type=int, default=999)
            s.add_argument("--adjust", choices=("holm", "bonferroni"), default="holm")
            s.add_argument("--features", choices=("proportions", "counts"), default="proportions")
            s.add_argument("--report")

    s = sub.add_parser("sample-frames", help="frame sampling plan from session metadata")
    s.add_argument("--config", required=True)
    s.add_argument("--interval", type=float, default=10.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample_frames)

    s = sub.add_parser("split", help="stratified train/val/test split")
    s.add_argument("--instances", required=True, help="CSV with id,class columns")
    s.add_argument("--ratios", default="0.7,0.2,0.1")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--imbalance-limit", type=float, default=5.0)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("mask", help="privacy mask rectangles for person boxes")
    s.add_argument("--log", required=True)
    s.add_argument("--config")
    s.add_argument("--fraction", type=float, default=0.20)
    s.add_argument("--labels", help="comma-separated labels to mask (default: all)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("report", help="merge JSON run reports")
    s.add_argument("--inputs", nargs="+", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError(parser.format_help())
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        name = exc.filename if exc.filename is not None else exc.args[0]
        print(f"error: input not found: {name}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:  # pragma: no cover
    sys.exit(dispatch())
