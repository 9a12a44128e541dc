"""Dependency-free SVG rendering of a segmentation.

Top panel: every data channel over time on a background shaded by the MAP
regime. Bottom panel: the prior probability curve of each regime.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a",
)

WIDTH, HEIGHT = 900, 560
LEFT, RIGHT = 60, 20
TOP_PANEL = (20, 300)
BOTTOM_PANEL = (340, 520)


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(values) - lo) / span * (out_hi - out_lo)


def _polyline(xs, ys, color, width=1.0):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def render_svg(t, Y, pi, channels=None, title="MRHLP segmentation") -> str:
    t = np.asarray(t, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    pi = np.asarray(pi, dtype=float)
    if Y.shape[0] != t.size or pi.shape[0] != t.size:
        raise ValueError("t, Y and pi must have the same number of rows")
    channels = channels or [f"y{j + 1}" for j in range(Y.shape[1])]
    labels = np.argmax(pi, axis=1)
    x = _scale(t, t[0], t[-1], LEFT, WIDTH - RIGHT)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{escape(title)}</title>',
        '<rect width="100%" height="100%" fill="white"/>',
    ]

    top, bottom = TOP_PANEL
    cuts = np.concatenate(([0], np.flatnonzero(np.diff(labels)) + 1, [t.size]))
    for a, b in zip(cuts[:-1], cuts[1:]):
        x0 = x[a] if a == 0 else 0.5 * (x[a - 1] + x[a])
        x1 = x[b - 1] if b == t.size else 0.5 * (x[b - 1] + x[b])
        color = PALETTE[labels[a] % len(PALETTE)]
        out.append(
            f'<rect x="{x0:.2f}" y="{top}" width="{max(x1 - x0, 0.5):.2f}" height="{bottom - top}" '
            f'fill="{color}" fill-opacity="0.15"/>'
        )
    lo, hi = float(Y.min()), float(Y.max())
    greys = ("#000000", "#444444", "#888888")
    for j in range(Y.shape[1]):
        ys = _scale(Y[:, j], lo, hi, bottom, top)
        out.append(_polyline(x, ys, greys[j % len(greys)], 0.8))
    out.append(f'<text x="{LEFT}" y="{top - 5}" font-size="12">{escape(", ".join(channels))}</text>')

    top, bottom = BOTTOM_PANEL
    for k in range(pi.shape[1]):
        ys = _scale(pi[:, k], 0.0, 1.0, bottom, top)
        out.append(_polyline(x, ys, PALETTE[k % len(PALETTE)], 1.5))
        out.append(
            f'<text x="{WIDTH - RIGHT - 40}" y="{top + 14 * (k + 1)}" font-size="11" '
            f'fill="{PALETTE[k % len(PALETTE)]}">k={k + 1}</text>'
        )
    for panel in (TOP_PANEL, BOTTOM_PANEL):
        out.append(
            f'<rect x="{LEFT}" y="{panel[0]}" width="{WIDTH - LEFT - RIGHT}" height="{panel[1] - panel[0]}" '
            'fill="none" stroke="black"/>'
        )
    out.append(f'<text x="{LEFT - 30}" y="{top + 4}" font-size="11">1</text>')
    out.append(f'<text x="{LEFT - 30}" y="{bottom + 4}" font-size="11">0</text>')
    out.append(f'<text x="{LEFT}" y="{HEIGHT - 15}" font-size="11">t = {t[0]:g}</text>')
    out.append(f'<text x="{WIDTH - RIGHT - 80}" y="{HEIGHT - 15}" font-size="11">t = {t[-1]:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
