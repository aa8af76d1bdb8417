"""Minimal deterministic SVG output.

Field plots color each triangle by the mean of its corner values on a fixed
two-color diverging map (blue below zero, red above, white at zero).  The
renderings are presentational; nothing downstream parses them.
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import SpaceTimeMesh

__all__ = ["render_field", "render_loglog"]

_SIZE = 640.0
_MARGIN = 40.0


def _diverging_color(c):
    """c in [-1, 1] -> blue-white-red."""
    c = min(1.0, max(-1.0, c))
    if c >= 0.0:
        r, g, b = 255, round(255 * (1.0 - c)), round(255 * (1.0 - c))
    else:
        r, g, b = round(255 * (1.0 + c)), round(255 * (1.0 + c)), 255
    return f"rgb({r},{g},{b})"


def render_field(mesh: SpaceTimeMesh, values, path, title: str = "") -> None:
    values = np.asarray(values, dtype=float)
    v = mesh.vertices
    x0, x1 = float(np.min(v[:, 0])), float(np.max(v[:, 0]))
    t0, t1 = float(np.min(v[:, 1])), float(np.max(v[:, 1]))
    span = _SIZE - 2.0 * _MARGIN

    def sx(x):
        return _MARGIN + (x - x0) / (x1 - x0) * span

    def sy(t):
        return _MARGIN + (1.0 - (t - t0) / (t1 - t0)) * span

    vmax = float(np.max(np.abs(values))) or 1.0
    tri_vals = values[mesh.triangles].mean(axis=1)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE:.0f}" '
        f'height="{_SIZE:.0f}" viewBox="0 0 {_SIZE:.0f} {_SIZE:.0f}">',
        f'<rect width="100%" height="100%" fill="white"/>',
    ]
    for tri, val in zip(mesh.triangles, tri_vals):
        pts = " ".join(
            f"{sx(v[i, 0]):.2f},{sy(v[i, 1]):.2f}" for i in tri
        )
        color = _diverging_color(val / vmax)
        lines.append(f'<polygon points="{pts}" fill="{color}" stroke="none"/>')
    for a, b in mesh.interface_edges:
        lines.append(
            f'<line x1="{sx(v[a, 0]):.2f}" y1="{sy(v[a, 1]):.2f}" '
            f'x2="{sx(v[b, 0]):.2f}" y2="{sy(v[b, 1]):.2f}" '
            f'stroke="black" stroke-width="0.8"/>'
        )
    if title:
        lines.append(
            f'<text x="{_MARGIN:.0f}" y="{_MARGIN * 0.6:.0f}" '
            f'font-family="monospace" font-size="14">{title}</text>'
        )
    lines.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def render_loglog(hs, errors, path, title: str = "") -> None:
    hs = [float(h) for h in hs]
    errors = [float(e) for e in errors]
    lx = [math.log10(h) for h in hs]
    ly = [math.log10(e) for e in errors]
    pad = 0.2
    x0, x1 = min(lx) - pad, max(lx) + pad
    y0, y1 = min(ly) - pad, max(ly) + pad
    span = _SIZE - 2.0 * _MARGIN

    def sx(v):
        return _MARGIN + (v - x0) / (x1 - x0) * span

    def sy(v):
        return _MARGIN + (1.0 - (v - y0) / (y1 - y0)) * span

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE:.0f}" '
        f'height="{_SIZE:.0f}" viewBox="0 0 {_SIZE:.0f} {_SIZE:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{_MARGIN:.0f}" y="{_MARGIN:.0f}" width="{span:.0f}" '
        f'height="{span:.0f}" fill="none" stroke="black"/>',
    ]
    # slope-1 reference through the finest point
    gx = [x0 + pad / 2, x1 - pad / 2]
    gy = [ly[-1] + (g - lx[-1]) for g in gx]
    lines.append(
        f'<line x1="{sx(gx[0]):.2f}" y1="{sy(gy[0]):.2f}" '
        f'x2="{sx(gx[1]):.2f}" y2="{sy(gy[1]):.2f}" '
        f'stroke="gray" stroke-dasharray="6,4"/>'
    )
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(lx, ly))
    lines.append(
        f'<polyline points="{pts}" fill="none" stroke="crimson" stroke-width="1.5"/>'
    )
    for a, b in zip(lx, ly):
        lines.append(
            f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3.5" fill="crimson"/>'
        )
    if title:
        lines.append(
            f'<text x="{_MARGIN:.0f}" y="{_MARGIN * 0.6:.0f}" '
            f'font-family="monospace" font-size="14">{title}</text>'
        )
    lines.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
