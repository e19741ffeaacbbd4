"""Minimal SVG renderers for heatmaps and line profiles.

Plain string assembly, deliberately dependency-free and deterministic: the
same inputs always produce byte-identical documents (no timestamps, no ids).
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

CELL_W = 7
CELL_H = 18
GUTTER = 96
BAR_PANEL = 140


def _shade(v: float) -> str:
    """Map a value in [0, 1] to a fill: white at 0, saturated blue at 1."""
    v = min(max(float(v), 0.0), 1.0)
    s = round(255 * (1.0 - v))
    return f"rgb({s},{s},255)"


def heatmap_svg(
    matrix,
    row_labels,
    bar_values,
    bar_label: str = "active bins",
    title: str = "",
) -> str:
    """Heatmap of a (rows x cols) matrix in [0, 1] plus per-row count bars.

    Every matrix entry becomes one ``<rect class="cell">``; the side panel
    draws one ``<rect class="bar">`` per row, scaled to the largest value.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"heatmap needs a 2-d matrix, got {m.ndim}-d")
    rows, cols = m.shape
    if len(row_labels) != rows or len(bar_values) != rows:
        raise ValueError("row_labels and bar_values must have one entry per row")

    top = 28 if title else 8
    grid_w = cols * CELL_W
    width = GUTTER + grid_w + 16 + BAR_PANEL
    height = top + rows * CELL_H + 28
    bar_max = max(max(bar_values), 1)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        '<style>text{font-family:monospace;font-size:11px;}</style>',
    ]
    if title:
        out.append(f'<text x="{GUTTER}" y="16">{escape(title)}</text>')
    for i in range(rows):
        y = top + i * CELL_H
        out.append(
            f'<text x="{GUTTER - 6}" y="{y + CELL_H - 5}" '
            f'text-anchor="end">{escape(str(row_labels[i]))}</text>'
        )
        for b in range(cols):
            out.append(
                f'<rect class="cell" x="{GUTTER + b * CELL_W}" y="{y}" '
                f'width="{CELL_W}" height="{CELL_H}" fill="{_shade(m[i, b])}" '
                f'stroke="none"/>'
            )
        bar_w = round(BAR_PANEL * 0.8 * bar_values[i] / bar_max)
        out.append(
            f'<rect class="bar" x="{GUTTER + grid_w + 16}" y="{y + 3}" '
            f'width="{bar_w}" height="{CELL_H - 6}" fill="rgb(70,70,70)"/>'
        )
        out.append(
            f'<text x="{GUTTER + grid_w + 20 + bar_w}" y="{y + CELL_H - 5}">'
            f"{bar_values[i]}</text>"
        )
    axis_y = top + rows * CELL_H
    for b in range(0, cols + 1, max(1, cols // 10)):
        x = GUTTER + min(b, cols - 1) * CELL_W
        out.append(f'<text x="{x}" y="{axis_y + 14}">{b}</text>')
    out.append(
        f'<text x="{GUTTER + grid_w + 16}" y="{axis_y + 14}">'
        f"{escape(bar_label)}</text>"
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def polyline_svg(
    values,
    x_label: str = "position",
    y_label: str = "value",
    title: str = "",
) -> str:
    """A single line profile as one ``<polyline>`` with bare axes."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("polyline needs a non-empty 1-d sequence")
    width, height, margin = 640, 240, 46
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    vmax = float(v.max())
    span = vmax if vmax > 0 else 1.0
    step = plot_w / max(v.size - 1, 1)

    points = " ".join(
        f"{margin + i * step:.2f},{margin + plot_h - (val / span) * plot_h:.2f}"
        for i, val in enumerate(v)
    )
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        '<style>text{font-family:monospace;font-size:11px;}</style>',
    ]
    if title:
        out.append(f'<text x="{margin}" y="18">{escape(title)}</text>')
    out.append(
        f'<line x1="{margin}" y1="{margin + plot_h}" x2="{margin + plot_w}" '
        f'y2="{margin + plot_h}" stroke="black"/>'
    )
    out.append(
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{margin + plot_h}" stroke="black"/>'
    )
    out.append(
        f'<polyline fill="none" stroke="rgb(30,80,200)" stroke-width="1.5" '
        f'points="{points}"/>'
    )
    out.append(
        f'<text x="{margin}" y="{height - 8}">{escape(x_label)}: 0..{v.size - 1}'
        f"</text>"
    )
    out.append(
        f'<text x="{margin}" y="{margin - 8}">{escape(y_label)}: max '
        f"{vmax:.6f}</text>"
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
