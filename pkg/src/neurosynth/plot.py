"""Static SVG line charts of trace signals."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .sim import Trace

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
WIDTH, HEIGHT = 720, 360
MARGIN = dict(left=80, right=20, top=30, bottom=50)
MAX_POINTS = 2000


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def _decimate(t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if t.size <= MAX_POINTS:
        return t, y
    idx = np.linspace(0, t.size - 1, MAX_POINTS).round().astype(int)
    return t[idx], y[idx]


def trace_svg(tr: Trace, signals: Sequence[str] | None = None, title: str | None = None) -> str:
    """Render ``signals`` of ``tr`` against time as an SVG document."""
    names = list(signals) if signals else [k for k in tr.signals if "." not in k]
    missing = [s for s in names if s not in tr.signals]
    if missing:
        raise KeyError(f"trace has no signal(s) {missing}")
    t = tr.times
    ys = [tr.signals[s] for s in names]
    y_lo = min(float(np.min(y)) for y in ys) if ys else 0.0
    y_hi = max(float(np.max(y)) for y in ys) if ys else 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    t_lo, t_hi = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0

    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def sx(v):
        return x0 + (v - t_lo) / (t_hi - t_lo) * (x1 - x0)

    def sy(v):
        return y0 + (v - y_lo) / (y_hi - y_lo) * (y1 - y0)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>']
    for v in _ticks(t_lo, t_hi):
        x = sx(v)
        out.append(f'<line x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" y2="{y0 + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{y0 + 16}" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y_lo, y_hi):
        y = sy(v)
        out.append(f'<line x1="{x0 - 4}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{y + 4:.2f}" text-anchor="end">{v:.3g}</text>')
    t_unit = "model time" if tr.units == "dimensionless" else "s"
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'time ({t_unit})</text>')
    out.append(f'<text transform="translate(16 {(y0 + y1) / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">signal ({escape(tr.units)})</text>')
    if title:
        out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    for i, (name, y) in enumerate(zip(names, ys)):
        color = COLORS[i % len(COLORS)]
        td, yd = _decimate(t, y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(td, yd))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{x1 - 8}" y="{y1 + 14 + 14 * i}" text-anchor="end" '
                   f'fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_trace_svg(tr: Trace, path, signals: Sequence[str] | None = None,
                    title: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(trace_svg(tr, signals, title))
