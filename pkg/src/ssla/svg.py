"""Hand-written SVG figures: heatmap triptychs, networks, PR curves, confusion maps."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .ena import NetworkGraph, circle_layout

# blue - white - red, 9 stops
DIVERGING = (
    "#2166ac", "#4393c3", "#92c5de", "#d1e5f0", "#f7f7f7",
    "#fddbc7", "#f4a582", "#d6604d", "#b2182b",
)
HIGH_COLOR = "#b2182b"
LOW_COLOR = "#2166ac"


def _f(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _hex(c: str) -> tuple[int, int, int]:
    return int(c[1:3], 16), int(c[3:5], 16), int(c[5:7], 16)


def palette(t: float) -> str:
    """Interpolated colour at position ``t`` in [0, 1] along the diverging ramp."""
    t = min(1.0, max(0.0, float(t)))
    x = t * (len(DIVERGING) - 1)
    i = min(int(np.floor(x)), len(DIVERGING) - 2)
    frac = x - i
    a, b = _hex(DIVERGING[i]), _hex(DIVERGING[i + 1])
    rgb = [round(a[k] + (b[k] - a[k]) * frac) for k in range(3)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def diverging_position(value: float, limit: float) -> float:
    if limit <= 0:
        return 0.5
    return 0.5 + 0.5 * value / limit


def _doc(width: float, height: float, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, *body, "</svg>"]) + "\n"


def emit_heatmap_svg(
    high: np.ndarray,
    low: np.ndarray,
    difference: np.ndarray,
    channels: Sequence[str],
    title: str = "",
) -> str:
    """Three stacked panels (High, Low, High - Low); rows are channels, columns normalized time.

    High and Low share a symmetric colour scale; the difference panel has its
    own scale centred exactly on zero.
    """
    mats = [np.atleast_2d(np.asarray(m, float)) for m in (high, low, difference)]
    if not (mats[0].shape == mats[1].shape == mats[2].shape):
        raise ValueError("heatmap panels must share a shape")
    L, D = mats[0].shape
    cell_w = max(1.0, min(8.0, 600.0 / L))
    cell_h = 16.0
    left, top, gap = 190.0, 30.0 if title else 12.0, 44.0
    panel_h = D * cell_h
    width = left + L * cell_w + 20
    height = top + 3 * (panel_h + gap)
    shared = float(max(np.abs(mats[0]).max(), np.abs(mats[1]).max()))
    dlim = float(np.abs(mats[2]).max())
    body = []
    if title:
        body.append(f'<text x="{_f(left)}" y="18" font-weight="bold">{escape(title)}</text>')
    names = ("High", "Low", "Difference (High - Low)")
    for p, (m, name) in enumerate(zip(mats, names)):
        y0 = top + p * (panel_h + gap)
        lim = dlim if p == 2 else shared
        body.append(f'<g class="panel" data-name="{escape(name)}">')
        body.append(f'<text x="4" y="{_f(y0 - 4)}" font-weight="bold">{escape(name)}</text>')
        for d in range(D):
            y = y0 + d * cell_h
            body.append(
                f'<text x="{_f(left - 6)}" y="{_f(y + cell_h * 0.7)}" text-anchor="end">'
                f"{escape(channels[d])}</text>"
            )
            for k in range(L):
                colour = palette(diverging_position(m[k, d], lim))
                body.append(
                    f'<rect x="{_f(left + k * cell_w)}" y="{_f(y)}" width="{_f(cell_w)}" '
                    f'height="{_f(cell_h)}" fill="{colour}"/>'
                )
        axis_y = y0 + panel_h + 12
        for tick in (0.0, 0.5, 1.0):
            x = left + tick * L * cell_w
            body.append(f'<text x="{_f(x)}" y="{_f(axis_y)}" text-anchor="middle">{_f(tick)}</text>')
        body.append(
            f'<text x="{_f(left + L * cell_w / 2)}" y="{_f(axis_y + 12)}" text-anchor="middle">'
            "normalized time</text>"
        )
        body.append("</g>")
    return _doc(width, height, body)


def emit_network_svg(graphs: Sequence[NetworkGraph], max_stroke: float = 12.0) -> str:
    """Side-by-side circular network diagrams.

    Stroke width is proportional to |weight| with one scale across all graphs.
    Difference edges are red when High > Low and blue otherwise; group-mean
    edges take their group's colour.
    """
    if not graphs:
        raise ValueError("no graphs to draw")
    codes = graphs[0].codes
    for g in graphs:
        if g.codes != codes:
            raise ValueError("graphs must share the node set")
    wmax = max(float(np.abs(g.weights).max()) if len(g.weights) else 0.0 for g in graphs)
    size, radius = 360.0, 120.0
    pos = circle_layout(len(codes))
    body = []
    for gi, g in enumerate(graphs):
        ox, oy = gi * size + size / 2, size / 2 + 10
        body.append(f'<g class="network" data-kind="{g.kind}" data-label="{escape(g.label)}">')
        body.append(f'<text x="{_f(ox)}" y="18" text-anchor="middle" font-weight="bold">{escape(g.label or g.kind)}</text>')
        for a, b, w in g.edges:
            if w == 0 or wmax == 0:
                continue
            ia, ib = codes.index(a), codes.index(b)
            if g.kind == "difference":
                colour = HIGH_COLOR if w > 0 else LOW_COLOR
            else:
                colour = LOW_COLOR if g.label == "Low" else HIGH_COLOR
            stroke = max_stroke * abs(w) / wmax
            body.append(
                f'<line x1="{_f(ox + radius * pos[ia][0])}" y1="{_f(oy + radius * pos[ia][1])}" '
                f'x2="{_f(ox + radius * pos[ib][0])}" y2="{_f(oy + radius * pos[ib][1])}" '
                f'stroke="{colour}" stroke-width="{stroke:.6f}" stroke-opacity="0.7" '
                f'data-edge="{escape(a)}|{escape(b)}"/>'
            )
        for k, c in enumerate(codes):
            x, y = ox + radius * pos[k][0], oy + radius * pos[k][1]
            body.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="5" fill="#333"/>')
            body.append(
                f'<text x="{_f(x + 18 * pos[k][0])}" y="{_f(y + 18 * pos[k][1] + 4)}" '
                f'text-anchor="middle">{escape(c)}</text>'
            )
        body.append("</g>")
    return _doc(size * len(graphs), size + 20, body)


def emit_pr_svg(curves: dict, title: str = "Precision-Recall") -> str:
    w, h, pad = 420.0, 360.0, 40.0
    pw, ph = w - 2 * pad - 120, h - 2 * pad
    body = [
        f'<text x="{_f(pad)}" y="20" font-weight="bold">{escape(title)}</text>',
        f'<rect x="{_f(pad)}" y="{_f(pad)}" width="{_f(pw)}" height="{_f(ph)}" fill="none" stroke="#000"/>',
        f'<text x="{_f(pad + pw / 2)}" y="{_f(h - 8)}" text-anchor="middle">recall</text>',
        f'<text x="12" y="{_f(pad + ph / 2)}" transform="rotate(-90 12 {_f(pad + ph / 2)})" text-anchor="middle">precision</text>',
    ]
    labels = list(curves)
    for k, label in enumerate(labels):
        c = curves[label]
        colour = palette(k / max(1, len(labels) - 1))
        if c.recall:
            pts = " ".join(
                f"{_f(pad + r * pw)},{_f(pad + (1 - p) * ph)}" for p, r in zip(c.precision, c.recall)
            )
            body.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ap = "n/a" if c.ap is None else f"{c.ap:.3f}"
        body.append(
            f'<text x="{_f(pad + pw + 8)}" y="{_f(pad + 12 + 14 * k)}" fill="{colour}">'
            f"{escape(label)} {ap}</text>"
        )
    return _doc(w, h, body)


def emit_confusion_svg(matrix: np.ndarray, labels: Sequence[str]) -> str:
    names = list(labels) + ["background"]
    k = len(names)
    cell, left, top = 44.0, 160.0, 30.0
    body = [f'<text x="{_f(left)}" y="16" font-weight="bold">rows: predicted / columns: true</text>']
    for i in range(k):
        body.append(f'<text x="{_f(left - 6)}" y="{_f(top + i * cell + cell / 2 + 4)}" text-anchor="end">{escape(names[i])}</text>')
        for j in range(k):
            v = float(matrix[i, j])
            body.append(
                f'<rect x="{_f(left + j * cell)}" y="{_f(top + i * cell)}" width="{_f(cell)}" '
                f'height="{_f(cell)}" fill="{palette(0.5 + 0.5 * min(1.0, v))}" stroke="#fff"/>'
            )
            body.append(
                f'<text x="{_f(left + j * cell + cell / 2)}" y="{_f(top + i * cell + cell / 2 + 4)}" '
                f'text-anchor="middle" font-size="9">{v:.2f}</text>'
            )
    return _doc(left + k * cell + 10, top + k * cell + 10, body)
