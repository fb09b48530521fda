"""Heatmaps as standalone SVG, no plotting library involved."""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

# EER colour stops over the fixed 0..0.5 scale (a viridis-like ramp)
STOPS: Tuple[Tuple[float, str], ...] = (
    (0.0, "#440154"),
    (0.1, "#3b528b"),
    (0.2, "#21918c"),
    (0.3, "#5ec962"),
    (0.4, "#b5de2b"),
    (0.5, "#fde725"),
)
SCALE_MAX = 0.5
INVALID_FILL = "#d9d9d9"


def _rgb(hex_colour: str) -> np.ndarray:
    return np.array([int(hex_colour[i:i + 2], 16) for i in (1, 3, 5)], dtype=np.float64)


def colour(value: float) -> str:
    """Linear interpolation between the stops; values are clipped to [0, 0.5]."""
    v = min(max(float(value), 0.0), SCALE_MAX)
    for (a, ca), (b, cb) in zip(STOPS, STOPS[1:]):
        if v <= b:
            w = (v - a) / (b - a)
            rgb = (1 - w) * _rgb(ca) + w * _rgb(cb)
            return "#" + "".join(f"{int(round(c)):02x}" for c in rgb)
    return STOPS[-1][1]


def _text_colour(value: float) -> str:
    return "#000000" if value >= 0.3 else "#ffffff"


def heatmap(values, x_labels: Sequence[str], y_labels: Sequence[str], title: str = "",
            x_title: str = "window size s (s)", y_title: str = "offset o (s)",
            cell: int = 56) -> str:
    """values[i, j] belongs to column x_labels[i] and row y_labels[j]; NaN cells are marked invalid."""
    v = np.asarray(values, dtype=np.float64)
    nx, ny = len(x_labels), len(y_labels)
    if v.shape != (nx, ny):
        raise ValueError(f"grid shape {v.shape} does not match labels ({nx}, {ny})")
    left, top = 70, 40 if title else 16
    width = left + nx * cell + 110
    height = top + ny * cell + 60
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{left}" y="22" font-size="14">{_esc(title)}</text>')
    for j in range(ny):
        # largest offset on top, as in a y axis
        row = ny - 1 - j
        y = top + row * cell
        out.append(f'<text x="{left - 8}" y="{y + cell / 2 + 4:g}" text-anchor="end">{_esc(y_labels[j])}</text>')
        for i in range(nx):
            x = left + i * cell
            val = v[i, j]
            if np.isnan(val):
                out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{INVALID_FILL}" '
                           f'stroke="#ffffff"/>')
                out.append(f'<text x="{x + cell / 2:g}" y="{y + cell / 2 + 4:g}" text-anchor="middle" '
                           f'fill="#707070">n/a</text>')
            else:
                out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{colour(val)}" '
                           f'stroke="#ffffff"/>')
                out.append(f'<text x="{x + cell / 2:g}" y="{y + cell / 2 + 4:g}" text-anchor="middle" '
                           f'fill="{_text_colour(val)}">{val:.4f}</text>')
    base = top + ny * cell
    for i in range(nx):
        out.append(f'<text x="{left + i * cell + cell / 2:g}" y="{base + 16}" text-anchor="middle">'
                   f'{_esc(x_labels[i])}</text>')
    out.append(f'<text x="{left + nx * cell / 2:g}" y="{base + 38}" text-anchor="middle">{_esc(x_title)}</text>')
    out.append(f'<text x="18" y="{top + ny * cell / 2:g}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ny * cell / 2:g})">{_esc(y_title)}</text>')
    out += _legend(left + nx * cell + 24, top, max(ny * cell, 120))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _legend(x: int, y: int, h: int) -> list:
    parts = ['<defs><linearGradient id="eer" x1="0" y1="1" x2="0" y2="0">']
    for v, c in STOPS:
        parts.append(f'<stop offset="{v / SCALE_MAX:g}" stop-color="{c}"/>')
    parts.append("</linearGradient></defs>")
    parts.append(f'<rect x="{x}" y="{y}" width="16" height="{h}" fill="url(#eer)" stroke="#000000"/>')
    for v, _c in STOPS:
        ty = y + h - v / SCALE_MAX * h
        parts.append(f'<text x="{x + 22}" y="{ty + 4:g}">{v:.1f}</text>')
    parts.append(f'<text x="{x}" y="{y + h + 18}">EER</text>')
    return parts


def _esc(text) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
