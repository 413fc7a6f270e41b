"""Minimal self-contained SVG renderer for the two threshold curves."""

from __future__ import annotations

import numpy as np

from .boundaries import BoundaryCurves

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 64, 16, 20, 44


def _ticks(lo: float, hi: float, n: int = 6) -> np.ndarray:
    raw = np.linspace(lo, hi, n)
    return np.round(raw, max(0, 2 - int(np.floor(np.log10(max(hi - lo, 1e-12))))))


def write_boundaries_svg(curves: BoundaryCurves, path,
                         title: str = "action thresholds") -> None:
    """Plot the investment (lower) and disinvestment (upper) thresholds."""
    t = curves.t_grid
    t_lo, t_hi = float(t[0]), float(t[-1])
    y_lo = 0.0
    y_hi = 1.05 * float(np.nanmax(curves.y_minus))

    def sx(tv):
        return _ML + (tv - t_lo) / (t_hi - t_lo) * (_W - _ML - _MR)

    def sy(yv):
        return _H - _MB - (yv - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    def poly(ys, color):
        pts = " ".join(f"{sx(tv):.2f},{sy(yv):.2f}" for tv, yv in zip(t, ys))
        return (f'<polyline fill="none" stroke="{color}" stroke-width="1.8" '
                f'points="{pts}"/>')

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML}" y="14" font-size="13" font-family="sans-serif">{title}</text>',
        # axes
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{(_ML + _W - _MR) / 2:.0f}" y="{_H - 8}" font-size="13" '
        f'font-family="sans-serif">t</text>',
        f'<text x="14" y="{(_MT + _H - _MB) / 2:.0f}" font-size="13" '
        f'font-family="sans-serif">y</text>',
    ]
    for tv in _ticks(t_lo, t_hi):
        x = sx(tv)
        parts.append(f'<line x1="{x:.1f}" y1="{_H - _MB}" x2="{x:.1f}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{_H - _MB + 18}" font-size="11" '
                     f'font-family="sans-serif" text-anchor="middle">{tv:g}</text>')
    for yv in _ticks(y_lo, y_hi):
        yy = sy(yv)
        parts.append(f'<line x1="{_ML - 5}" y1="{yy:.1f}" x2="{_ML}" '
                     f'y2="{yy:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{yy + 4:.1f}" font-size="11" '
                     f'font-family="sans-serif" text-anchor="end">{yv:g}</text>')
    parts.append(poly(curves.y_plus, "#1f77b4"))
    parts.append(poly(curves.y_minus, "#d62728"))
    parts.append(f'<text x="{_W - 200}" y="{_MT + 16}" font-size="12" '
                 f'fill="#1f77b4" font-family="sans-serif">lower: invest below</text>')
    parts.append(f'<text x="{_W - 200}" y="{_MT + 32}" font-size="12" '
                 f'fill="#d62728" font-family="sans-serif">upper: disinvest above</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
