"""Minimal SVG line charts (no plotting dependency)."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 140, 30, 50


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 6)
        return [float(k) for k in range(a, b + 1, step)]
    span = hi - lo
    raw = span / 5 if span > 0 else 1.0
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return list(np.arange(start, hi + 0.5 * step, step))


def _fmt(v, log):
    if log:
        return f"1e{int(v)}"
    return f"{v:.4g}"


def line_chart(series: dict, dest=None, title: str = "", xlabel: str = "t",
               logx: bool = False, logy: bool = False) -> str:
    """Render ``{name: (x, y)}`` as polylines; returns the SVG text.

    Non-positive values are dropped on log axes.
    """
    prepared = {}
    for name, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if logx:
            keep &= x > 0
        if logy:
            keep &= y > 0
        x, y = x[keep], y[keep]
        prepared[name] = (np.log10(x) if logx else x, np.log10(y) if logy else y)
    xs = np.concatenate([v[0] for v in prepared.values()] or [np.zeros(1)])
    ys = np.concatenate([v[1] for v in prepared.values()] or [np.zeros(1)])
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    sx = lambda v: LEFT + (v - x0) / (x1 - x0) * pw  # noqa: E731
    sy = lambda v: TOP + ph - (v - y0) / (y1 - y0) * ph  # noqa: E731

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    for v in _ticks(x0, x1, logx):
        if x0 <= v <= x1:
            px = sx(v)
            out.append(f'<line x1="{px:.1f}" y1="{TOP + ph}" x2="{px:.1f}" y2="{TOP + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{px:.1f}" y="{TOP + ph + 16}" text-anchor="middle">{_fmt(v, logx)}</text>')
    for v in _ticks(y0, y1, logy):
        if y0 <= v <= y1:
            py = sy(v)
            out.append(f'<line x1="{LEFT - 4}" y1="{py:.1f}" x2="{LEFT}" y2="{py:.1f}" stroke="black"/>')
            out.append(f'<text x="{LEFT - 6}" y="{py + 4:.1f}" text-anchor="end">{_fmt(v, logy)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    for k, (name, (x, y)) in enumerate(prepared.items()):
        color = COLORS[k % len(COLORS)]
        if x.size:
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 14 + 16 * k
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 36}" y="{ly + 4}">{escape(str(name))}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if dest is not None:
        Path(dest).write_text(text, encoding="utf-8")
    return text
