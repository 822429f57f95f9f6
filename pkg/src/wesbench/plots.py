"""Minimal SVG figures for benchmark reports.

The writer emits plain SVG text; contour lines come from ``contourpy``.
Angles are shown in degrees on axis labels only.
"""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import contourpy
import numpy as np

W, H = 480, 400
MARGIN = dict(left=60, right=20, top=36, bottom=48)

# anchor colors for a sequential and a diverging map
_SEQ = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], float)
_DIV = np.array([[33, 102, 172], [247, 247, 247], [178, 24, 43]], float)
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf"]


def _ramp(anchors, t):
    t = np.clip(np.nan_to_num(np.asarray(t, float)), 0.0, 1.0)
    pos = t * (len(anchors) - 1)
    i = np.minimum(pos.astype(int), len(anchors) - 2)
    f = (pos - i)[..., None]
    rgb = anchors[i] * (1 - f) + anchors[i + 1] * f
    return ["#%02x%02x%02x" % tuple(int(round(c)) for c in row) for row in np.atleast_2d(rgb)]


def _fmt(v):
    return f"{v:.3g}"


class Svg:
    def __init__(self, width=W, height=H, title=""):
        self.w, self.h = width, height
        self.items = []
        if title:
            self.text(width / 2, 22, title, size=14, anchor="middle")

    def text(self, x, y, s, size=11, anchor="start", rotate=None):
        tr = f' transform="rotate({rotate} {x:.1f} {y:.1f})"' if rotate else ""
        self.items.append(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" '
                          f'text-anchor="{anchor}" font-family="sans-serif"{tr}>{escape(str(s))}</text>')

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.items.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
                          f'fill="{fill}" stroke="{stroke}"/>')

    def circle(self, x, y, r, fill, opacity=1.0):
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{fill}" '
                          f'fill-opacity="{opacity}"/>')

    def polyline(self, xy, stroke, width=1.2, dash=None):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in xy)
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{width}"{d}/>')

    def render(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        return "\n".join([head, f'<rect width="{self.w}" height="{self.h}" fill="white"/>',
                          *self.items, "</svg>"]) + "\n"

    def save(self, path):
        Path(path).write_text(self.render())
        return path


class Axes:
    """Data-to-pixel mapping for one panel, with a frame and tick labels."""

    def __init__(self, svg, xlim, ylim, box=None, xlabel="", ylabel=""):
        self.svg = svg
        if box is None:
            box = (MARGIN["left"], MARGIN["top"], svg.w - MARGIN["left"] - MARGIN["right"],
                   svg.h - MARGIN["top"] - MARGIN["bottom"])
        self.x0, self.y0, self.bw, self.bh = box
        self.xlim = _pad(xlim)
        self.ylim = _pad(ylim)
        svg.rect(self.x0, self.y0, self.bw, self.bh, "none", "#444")
        for k in range(5):
            fx = self.xlim[0] + k / 4 * (self.xlim[1] - self.xlim[0])
            fy = self.ylim[0] + k / 4 * (self.ylim[1] - self.ylim[0])
            px, py = self.px(fx, fy)
            svg.text(px, self.y0 + self.bh + 14, _fmt(fx), size=9, anchor="middle")
            svg.text(self.x0 - 4, py + 3, _fmt(fy), size=9, anchor="end")
        if xlabel:
            svg.text(self.x0 + self.bw / 2, self.y0 + self.bh + 32, xlabel, anchor="middle")
        if ylabel:
            svg.text(self.x0 - 44, self.y0 + self.bh / 2, ylabel, anchor="middle", rotate=-90)

    def px(self, x, y):
        sx = self.x0 + (np.asarray(x, float) - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * self.bw
        sy = self.y0 + self.bh - (np.asarray(y, float) - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * self.bh
        return sx, sy


def _pad(lim):
    lo, hi = float(lim[0]), float(lim[1])
    if not np.isfinite(lo) or not np.isfinite(hi):
        return (0.0, 1.0)
    if hi <= lo:
        return (lo - 0.5, hi + 0.5)
    return (lo, hi)


def _legend(svg, entries, x=None, y=44):
    x = svg.w - 150 if x is None else x
    for k, (label, color) in enumerate(entries):
        svg.rect(x, y + 16 * k - 8, 10, 10, color)
        svg.text(x + 14, y + 16 * k + 1, label, size=10)


# -- figures ------------------------------------------------------------------------

def contour_overlay(path, xs, ys, densities, labels, title="TICA 0/1 density",
                    n_levels=6, xlabel="TIC 0", ylabel="TIC 1"):
    """Contours of one or more gridded densities (``(len(xs), len(ys))`` each) on
    shared axes, one color per density."""
    svg = Svg(title=title)
    ax = Axes(svg, (xs[0], xs[-1]), (ys[0], ys[-1]), xlabel=xlabel, ylabel=ylabel)
    entries = []
    for k, (z, label) in enumerate(zip(densities, labels)):
        color = PALETTE[k % len(PALETTE)]
        z = np.asarray(z, float)
        top = z.max()
        if top > 0:
            gen = contourpy.contour_generator(x=xs, y=ys, z=z.T)
            for level in np.linspace(0, top, n_levels + 2)[1:-1]:
                for line in gen.lines(level):
                    sx, sy = ax.px(line[:, 0], line[:, 1])
                    svg.polyline(np.column_stack([sx, sy]), color, dash=None if k == 0 else "4,2")
        entries.append((label, color))
    _legend(svg, entries)
    return svg.save(path)


def scatter(path, points, values=None, title="", categorical=False, xlabel="TIC 0",
            ylabel="TIC 1", max_points=5000, value_label=""):
    """2D scatter colored by ``values`` (continuous ramp or category palette)."""
    p = np.asarray(points, float)
    ok = np.isfinite(p[:, :2]).all(axis=1)
    p = p[ok]
    v = None if values is None else np.asarray(values)[ok]
    if len(p) > max_points:
        keep = np.linspace(0, len(p) - 1, max_points).astype(int)
        p = p[keep]
        v = None if v is None else v[keep]
    svg = Svg(title=title)
    if len(p) == 0:
        svg.text(W / 2, H / 2, "no points", anchor="middle")
        return svg.save(path)
    ax = Axes(svg, (p[:, 0].min(), p[:, 0].max()), (p[:, 1].min(), p[:, 1].max()),
              xlabel=xlabel, ylabel=ylabel)
    sx, sy = ax.px(p[:, 0], p[:, 1])
    if v is None:
        colors = [PALETTE[0]] * len(p)
    elif categorical:
        colors = [PALETTE[int(c) % len(PALETTE)] for c in v]
        _legend(svg, [(f"{value_label} {c}".strip(), PALETTE[int(c) % len(PALETTE)])
                      for c in np.unique(v)])
    else:
        lo, hi = float(v.min()), float(v.max())
        colors = _ramp(_SEQ, (v - lo) / (hi - lo if hi > lo else 1.0))
        svg.text(svg.w - 20, MARGIN["top"] - 6, f"{value_label} {_fmt(lo)} to {_fmt(hi)}".strip(),
                 size=9, anchor="end")
    for x, y, c in zip(sx, sy, colors):
        svg.circle(x, y, 1.6, c, 0.7)
    return svg.save(path)


def heatmap(path, matrix, title="Contact map difference", label="model - GT"):
    """Diverging heat map centred on zero."""
    m = np.asarray(matrix, float)
    n = m.shape[0]
    svg = Svg(title=title)
    size = min(svg.w - 120, svg.h - 80)
    x0, y0 = 50, 40
    cell = size / max(n, 1)
    vmax = float(np.abs(m).max()) or 1.0
    colors = _ramp(_DIV, (m.ravel() / vmax + 1) / 2)
    for k, c in enumerate(colors):
        i, j = divmod(k, n)
        svg.rect(x0 + j * cell, y0 + i * cell, cell, cell, c)
    svg.rect(x0, y0, size, size, "none", "#444")
    for k, c in enumerate(_ramp(_DIV, np.linspace(0, 1, 21))):
        svg.rect(x0 + size + 20, y0 + size - (k + 1) * size / 21, 14, size / 21, c)
    svg.text(x0 + size + 38, y0 + 8, _fmt(vmax), size=9)
    svg.text(x0 + size + 38, y0 + size, _fmt(-vmax), size=9)
    svg.text(x0 + size / 2, y0 + size + 20, f"{label} (mean distance)", anchor="middle")
    return svg.save(path)


def distribution_panels(path, panels, title="Structural distributions"):
    """Grid of 1D histograms; ``panels`` holds ``(name, edges, [(label, masses), ...])``."""
    cols = 2
    rows = max(1, -(-len(panels) // cols))
    svg = Svg(W * cols // 1, 40 + 300 * rows, title=title)
    pw, ph = W - 80, 220
    for k, (name, edges, series) in enumerate(panels):
        r, c = divmod(k, cols)
        box = (c * W + 60, 50 + r * 300, pw, ph)
        centers = 0.5 * (np.asarray(edges)[1:] + np.asarray(edges)[:-1])
        top = max([float(np.max(m)) for _, m in series] + [1e-12])
        ax = Axes(svg, (edges[0], edges[-1]), (0, top), box=box, xlabel=name, ylabel="mass")
        entries = []
        for j, (label, masses) in enumerate(series):
            color = PALETTE[j % len(PALETTE)]
            sx, sy = ax.px(centers, masses)
            svg.polyline(np.column_stack([sx, sy]), color)
            entries.append((label, color))
        _legend(svg, entries, x=box[0] + pw - 110, y=box[1] + 14)
    return svg.save(path)
