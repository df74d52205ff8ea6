"""Minimal self-contained SVG line plots and heat maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=55)
PALETTE = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d68910"]


@dataclass
class Style:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    labels: Sequence[str] = field(default_factory=list)
    colorbar_label: str = ""


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, n)


def _frame(style: Style, x0, x1, y0, y1) -> list[str]:
    L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]
    out = [
        f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="#333"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{escape(style.title)}</text>',
        f'<text x="{(L + R) / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">{escape(style.xlabel)}</text>',
        f'<text x="16" y="{(T + B) / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {(T + B) / 2})">{escape(style.ylabel)}</text>',
    ]
    for xv in _ticks(x0, x1):
        px = L + (xv - x0) / (x1 - x0 or 1) * (R - L)
        out.append(f'<text x="{px:.2f}" y="{B + 18}" text-anchor="middle" font-size="11">{_fmt(xv)}</text>')
    for yv in _ticks(y0, y1):
        py = B - (yv - y0) / (y1 - y0 or 1) * (B - T)
        out.append(f'<text x="{L - 6}" y="{py + 4:.2f}" text-anchor="end" font-size="11">{_fmt(yv)}</text>')
    return out


def _doc(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">')
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>', *body, "</svg>"]) + "\n"


def line_plot(series: Sequence[tuple[Sequence[float], Sequence[float]]], style: Optional[Style] = None) -> str:
    """One <path> per (x, y) series, all on shared axes."""
    style = style or Style()
    if not series or any(len(x) == 0 for x, _ in series):
        raise ValueError("nothing to plot")
    xs = np.concatenate([np.asarray(x, float) for x, _ in series])
    ys = np.concatenate([np.asarray(y, float) for _, y in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = min(0.0, float(np.nanmin(ys))), float(np.nanmax(ys))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]
    body = _frame(style, x0, x1, y0, y1)
    for j, (x, y) in enumerate(series):
        px = L + (np.asarray(x, float) - x0) / (x1 - x0) * (R - L)
        py = B - (np.asarray(y, float) - y0) / (y1 - y0) * (B - T)
        d = "M" + " L".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        color = PALETTE[j % len(PALETTE)]
        body.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.3"/>')
        if j < len(style.labels):
            body.append(f'<text x="{R - 8}" y="{T + 16 + 16 * j}" text-anchor="end" font-size="12" '
                        f'fill="{color}">{escape(style.labels[j])}</text>')
    return _doc(body)


def _color(t: float) -> str:
    # white -> dark blue
    t = min(max(t, 0.0), 1.0)
    r = int(round(255 * (1 - t) + 20 * t))
    g = int(round(255 * (1 - t) + 50 * t))
    b = int(round(255 * (1 - t) + 140 * t))
    return f"#{r:02x}{g:02x}{b:02x}"


def heat_map(matrix, row_labels: Sequence = (), col_labels: Sequence = (),
             style: Optional[Style] = None) -> str:
    """One <rect class="cell"> per matrix entry, linear colour scale from 0 to max."""
    style = style or Style()
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("heat map needs a non-empty 2-D matrix")
    nr, nc = m.shape
    vmax = float(m.max()) or 1.0
    L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"] - 60, MARGIN["top"], HEIGHT - MARGIN["bottom"]
    cw, ch = (R - L) / nc, (B - T) / nr
    body = [
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{escape(style.title)}</text>',
        f'<text x="{(L + R) / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">{escape(style.xlabel)}</text>',
        f'<text x="16" y="{(T + B) / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {(T + B) / 2})">{escape(style.ylabel)}</text>',
    ]
    for i in range(nr):
        for j in range(nc):
            body.append(
                f'<rect class="cell" x="{L + j * cw:.2f}" y="{T + i * ch:.2f}" width="{cw:.2f}" '
                f'height="{ch:.2f}" fill="{_color(m[i, j] / vmax)}"><title>{_fmt(m[i, j])}</title></rect>'
            )
    for j, lab in enumerate(col_labels):
        body.append(f'<text x="{L + (j + 0.5) * cw:.2f}" y="{B + 16}" text-anchor="middle" font-size="11">{escape(str(lab))}</text>')
    for i, lab in enumerate(row_labels):
        body.append(f'<text x="{L - 6}" y="{T + (i + 0.5) * ch + 4:.2f}" text-anchor="end" font-size="11">{escape(str(lab))}</text>')
    # colour bar
    for s in range(20):
        y = B - (s + 1) * (B - T) / 20
        body.append(f'<rect x="{R + 20}" y="{y:.2f}" width="14" height="{(B - T) / 20 + 0.5:.2f}" fill="{_color((s + 0.5) / 20)}"/>')
    body.append(f'<text x="{R + 38}" y="{T + 10}" font-size="11">{_fmt(vmax)}</text>')
    body.append(f'<text x="{R + 38}" y="{B}" font-size="11">0</text>')
    return _doc(body)


def emit_svg(data, style: Optional[Style] = None) -> str:
    """Render a 2-D matrix as a heat map, anything else as line series.

    Line data may be a single (x, y) pair, a list of such pairs, or an object
    with ``delays_ps``/``values`` (a correlation curve).
    """
    if hasattr(data, "delays_ps") and hasattr(data, "values"):
        return line_plot([(data.delays_ps, data.values)], style)
    if hasattr(data, "values") and np.ndim(getattr(data, "values")) == 2:
        ks = getattr(data, "ks", [])
        return heat_map(data.values, ks, ks, style)
    arr = data
    if isinstance(arr, np.ndarray) and arr.ndim == 2:
        return heat_map(arr, style=style)
    if isinstance(arr, tuple) and len(arr) == 2 and np.ndim(arr[0]) == 1:
        return line_plot([arr], style)
    return line_plot(list(arr), style)
