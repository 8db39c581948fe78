"""Self-contained SVG line charts and heatmaps (no external assets)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["PALETTE", "render_feature_svg", "render_heatmap_svg", "diverging_color"]

PALETTE = ["#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"]
BASELINE_COLOR = "#1f77b4"

_RED = np.array([178, 24, 43])
_BLUE = np.array([33, 102, 172])
_WHITE = np.array([255, 255, 255])


def diverging_color(value: float, scale: float) -> str:
    """Blue (negative) - white (0) - red (positive), saturating at ``|value| = scale``."""
    t = 0.0 if scale <= 0 else float(np.clip(value / scale, -1.0, 1.0))
    end = _RED if t >= 0 else _BLUE
    rgb = np.rint(_WHITE + abs(t) * (end - _WHITE)).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def render_feature_svg(
    curves: Sequence[Sequence[float]],
    labels: Sequence[str],
    x: Sequence[float] | None = None,
    *,
    title: str = "",
    x_label: str = "lag [s]",
    y_label: str = "",
    normalized: bool = False,
    baseline: Sequence[float] | None = None,
    baseline_label: str = "Pearson",
    width: int = 720,
    height: int = 400,
) -> str:
    """Line chart of one or more curves over a shared x axis.

    With ``normalized`` each curve (and the baseline) is divided by its
    maximum absolute value before plotting.
    """
    ys = [np.asarray(c, dtype=np.float64) for c in curves]
    if not ys or any(c.size == 0 for c in ys):
        raise ValueError("nothing to plot")
    n = ys[0].size
    if any(c.size != n for c in ys):
        raise ValueError("curves must share one length")
    xs = np.arange(n, dtype=np.float64) if x is None else np.asarray(x, dtype=np.float64)
    if xs.size != n:
        raise ValueError("x axis length does not match curves")
    series = [(str(lab), c, PALETTE[i % len(PALETTE)]) for i, (lab, c) in enumerate(zip(labels, ys))]
    if baseline is not None:
        series.insert(0, (baseline_label, np.asarray(baseline, dtype=np.float64), BASELINE_COLOR))
    if normalized:
        series = [(lab, c / (np.max(np.abs(c)) or 1.0), col) for lab, c, col in series]

    left, right, top, bottom = 70, 150, 40 if title else 20, 50
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = float(xs.min()), float(xs.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    allv = np.concatenate([c for _, c, _ in series])
    y0, y1 = float(np.min(allv)), float(np.max(allv))
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v: float) -> float:
        return left + (v - x0) / (x1 - x0) * pw

    def py(v: float) -> float:
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="15" font-family="sans-serif">{escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444444"/>')
    for v in np.linspace(x0, x1, 5):
        out.append(f'<line x1="{px(v):.1f}" y1="{top + ph}" x2="{px(v):.1f}" y2="{top + ph + 5}" stroke="#444444"/>')
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">{_fmt(v)}</text>')
    for v in np.linspace(y0, y1, 5):
        out.append(f'<line x1="{left - 5}" y1="{py(v):.1f}" x2="{left}" y2="{py(v):.1f}" stroke="#444444"/>')
        out.append(f'<text x="{left - 8}" y="{py(v) + 4:.1f}" text-anchor="end" font-size="11" font-family="sans-serif">{_fmt(v)}</text>')
    if y0 < 0 < y1:
        out.append(f'<line x1="{left}" y1="{py(0):.1f}" x2="{left + pw}" y2="{py(0):.1f}" stroke="#bbbbbb" stroke-dasharray="4 3"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12" font-family="sans-serif">{escape(x_label)}</text>')
    if y_label:
        out.append(
            f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" font-family="sans-serif" '
            f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(y_label)}</text>'
        )
    for i, (lab, c, col) in enumerate(series):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, c))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly - 4}" x2="{left + pw + 32}" y2="{ly - 4}" stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly}" font-size="12" font-family="sans-serif">{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_heatmap_svg(
    grid: np.ndarray,
    scale: float | None = None,
    *,
    title: str = "",
    row_labels: Sequence[str] | None = None,
    col_labels: Sequence[str] | None = None,
    x_label: str = "",
    y_label: str = "",
    cell: int | None = None,
) -> str:
    """Heatmap with a diverging palette symmetric about 0.

    ``scale`` is the saturating magnitude (default: max ``|grid|``).  Row 0
    is drawn at the bottom so a grid indexed ``[y, z]`` reads like a plot
    with ``y`` upward.  NaN cells are drawn gray.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise ValueError("heatmap needs a nonempty 2-D grid")
    finite = g[np.isfinite(g)]
    if scale is None:
        scale = float(np.max(np.abs(finite))) if finite.size else 1.0
    rows, cols = g.shape
    if cell is None:
        cell = max(3, min(40, 400 // max(rows, cols)))
    left = 80 if row_labels is not None else 40
    top = 40 if title else 15
    bottom = 70 if col_labels is not None else 40
    width = left + cols * cell + 90
    height = top + rows * cell + bottom
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" shape-rendering="crispEdges">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="14" font-family="sans-serif">{escape(title)}</text>')
    for i in range(rows):
        y = top + (rows - 1 - i) * cell
        colors = ["#cccccc" if not np.isfinite(v) else diverging_color(v, scale) for v in g[i]]
        k = 0
        while k < cols:
            # one rect per run of equal colors
            run = k + 1
            while run < cols and colors[run] == colors[k]:
                run += 1
            out.append(f'<rect class="cell" x="{left + k * cell}" y="{y}" width="{(run - k) * cell}" height="{cell}" fill="{colors[k]}"/>')
            k = run
    if row_labels is not None:
        for i, lab in enumerate(row_labels):
            y = top + (rows - 1 - i) * cell + cell / 2 + 4
            out.append(f'<text x="{left - 6}" y="{y:.1f}" text-anchor="end" font-size="11" font-family="sans-serif">{escape(str(lab))}</text>')
    if col_labels is not None:
        for k, lab in enumerate(col_labels):
            x = left + k * cell + cell / 2
            yb = top + rows * cell + 14
            out.append(
                f'<text x="{x:.1f}" y="{yb}" text-anchor="end" font-size="11" font-family="sans-serif" '
                f'transform="rotate(-45 {x:.1f} {yb})">{escape(str(lab))}</text>'
            )
    if x_label:
        out.append(f'<text x="{left + cols * cell / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12" font-family="sans-serif">{escape(x_label)}</text>')
    if y_label:
        cy = top + rows * cell / 2
        out.append(
            f'<text x="14" y="{cy:.1f}" text-anchor="middle" font-size="12" font-family="sans-serif" '
            f'transform="rotate(-90 14 {cy:.1f})">{escape(y_label)}</text>'
        )
    # color bar
    bx = left + cols * cell + 20
    bh = rows * cell
    steps = 21
    for s in range(steps):
        v = scale * (1 - 2 * s / (steps - 1))
        out.append(f'<rect x="{bx}" y="{top + s * bh / steps:.2f}" width="14" height="{bh / steps + 0.5:.2f}" fill="{diverging_color(v, scale)}"/>')
    out.append(f'<text x="{bx + 18}" y="{top + 10}" font-size="10" font-family="sans-serif">{_fmt(scale)}</text>')
    out.append(f'<text x="{bx + 18}" y="{top + bh}" font-size="10" font-family="sans-serif">{_fmt(-scale)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
