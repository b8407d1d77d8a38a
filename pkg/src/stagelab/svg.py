"""Tiny SVG 1.1 writer for charts, root loci and phase portraits.

Only rectangles, polylines, lines and text are emitted, so the files open
in any browser without a plotting library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf", "#d62728")
BOUNDARY = "#d00000"


@dataclass
class Frame:
    """Maps data coordinates to a plot rectangle; log axes map by log10."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    x_log: bool = False
    y_log: bool = False
    width: int = 640
    height: int = 480
    margin: int = 60

    def _u(self, v, lo, hi, log):
        v = np.asarray(v, dtype=float)
        if log:
            return (np.log10(v) - math.log10(lo)) / (math.log10(hi) - math.log10(lo))
        return (v - lo) / (hi - lo) if hi != lo else np.full_like(v, 0.5)

    def px(self, x):
        return self.margin + self._u(x, *self.x_range, self.x_log) * (self.width - 2 * self.margin)

    def py(self, y):
        return self.height - self.margin - self._u(y, *self.y_range, self.y_log) * (
            self.height - 2 * self.margin)


class Canvas:
    def __init__(self, frame: Frame, title: str = ""):
        self.frame = frame
        self.items: list[str] = []
        self.title = title

    def rect(self, x0, y0, x1, y1, fill: str) -> None:
        f = self.frame
        a, b = f.px([x0, x1]), f.py([y0, y1])
        self.items.append(
            f'<rect x="{min(a):.2f}" y="{min(b):.2f}" width="{abs(a[1] - a[0]):.2f}" '
            f'height="{abs(b[1] - b[0]):.2f}" fill="{fill}" stroke="none"/>')

    def polyline(self, xs, ys, stroke: str, width: float = 1.5) -> None:
        f = self.frame
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(f.px(xs), f.py(ys))
                       if math.isfinite(a) and math.isfinite(b))
        if pts:
            self.items.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
                              f'stroke-width="{width}"/>')

    def marker(self, x, y, kind: str, stroke: str, size: float = 5.0) -> None:
        f = self.frame
        cx, cy = float(f.px(x)), float(f.py(y))
        s = size
        if kind == "x":
            segs = [(-s, -s, s, s), (-s, s, s, -s)]
        else:
            segs = [(-s, 0, s, 0), (0, -s, 0, s)]
        for a, b, c, d in segs:
            self.items.append(f'<line x1="{cx + a:.2f}" y1="{cy + b:.2f}" x2="{cx + c:.2f}" '
                              f'y2="{cy + d:.2f}" stroke="{stroke}" stroke-width="1.5"/>')

    def text(self, x_px: float, y_px: float, s: str, anchor: str = "middle", size: int = 12,
             rotate: bool = False) -> None:
        tr = f' transform="rotate(-90 {x_px:.1f} {y_px:.1f})"' if rotate else ""
        self.items.append(f'<text x="{x_px:.1f}" y="{y_px:.1f}" font-size="{size}" '
                          f'font-family="sans-serif" text-anchor="{anchor}"{tr}>{_esc(s)}</text>')

    def axes(self, x_label: str, y_label: str) -> None:
        f = self.frame
        m, w, h = f.margin, f.width, f.height
        self.items.append(f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
                          f'fill="none" stroke="black"/>')
        for frac, val in ((0.0, f.x_range[0]), (1.0, f.x_range[1])):
            self.text(m + frac * (w - 2 * m), h - m + 16, _fmt(val))
        for frac, val in ((0.0, f.y_range[0]), (1.0, f.y_range[1])):
            self.text(m - 6, h - m - frac * (h - 2 * m) + 4, _fmt(val), anchor="end")
        self.text(w / 2, h - m + 36, x_label + (" (log)" if f.x_log else ""))
        self.text(m - 44, h / 2, y_label + (" (log)" if f.y_log else ""), rotate=True)
        if self.title:
            self.text(w / 2, m - 20, self.title, size=14)

    def render(self) -> str:
        f = self.frame
        body = "\n".join(self.items)
        return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
                f'width="{f.width}" height="{f.height}" viewBox="0 0 {f.width} {f.height}">\n'
                f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')

    def save(self, path: Union[str, Path]) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.render())
        return p


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def _edges(values: np.ndarray, log: bool) -> np.ndarray:
    """Cell edges centred on grid points, clipped to the axis range."""
    v = np.asarray(values, dtype=float)
    if len(v) == 1:
        return np.array([v[0], v[0]])
    mid = np.sqrt(v[1:] * v[:-1]) if log else 0.5 * (v[1:] + v[:-1])
    return np.concatenate([[v[0]], mid, [v[-1]]])


def _cell_colour(value: float, margin: float, scale: float) -> str:
    if not math.isfinite(value):
        return "#ffe066"  # indeterminate
    if value < -margin:
        s = min(1.0, abs(value) / scale) if scale > 0 else 1.0
        g = int(235 - 120 * s)
        return f"rgb({g - 60},{g},{255})"
    return "#d9d9d9"


def chart(field, path: Union[str, Path], title: str = "") -> Path:
    """Heatmap of a stability field: stable cells shaded blue, boundary in red."""
    gx, gy = field.grid.x, field.grid.y
    frame = Frame((gx.lo, gx.hi), (gy.lo, gy.hi), gx.scale == "log", gy.scale == "log")
    c = Canvas(frame, title)
    xe, ye = _edges(gx.values(), frame.x_log), _edges(gy.values(), frame.y_log)
    finite = field.values[np.isfinite(field.values)]
    scale = float(np.abs(finite[finite < 0]).max()) if (finite < 0).any() else 1.0
    for ix in range(gx.n):
        for iy in range(gy.n):
            c.rect(xe[ix], ye[iy], xe[ix + 1], ye[iy + 1],
                   _cell_colour(field.values[ix, iy], field.margins[ix, iy], scale))
    for line in field.boundary:
        c.polyline(line[:, 0], line[:, 1], BOUNDARY, 2.0)
    c.axes(gx.param, gy.param)
    return c.save(path)


def stack(st, path: Union[str, Path], title: str = "") -> Path:
    """Boundaries of every chart in a stack, coloured by position in the stack.

    The chart with the fewest stable cells is drawn thicker.
    """
    g = st.fields[0].grid
    frame = Frame((g.x.lo, g.x.hi), (g.y.lo, g.y.hi), g.x.scale == "log", g.y.scale == "log")
    c = Canvas(frame, title)
    k_min = int(np.argmin(st.areas))
    n = len(st.fields)
    for k, f in enumerate(st.fields):
        shade = int(200 * (1 - k / max(n - 1, 1)))
        col = "black" if k == k_min else f"rgb({shade},{shade},255)"
        for line in f.boundary:
            c.polyline(line[:, 0], line[:, 1], col, 2.5 if k == k_min else 1.0)
    c.text(frame.width - frame.margin, frame.margin - 6,
           f"black: {st.param} = {st.values[k_min]:.4g} (fewest stable cells)", anchor="end", size=11)
    c.axes(g.x.param, g.y.param)
    return c.save(path)


def locus(rl, path: Union[str, Path], exclude: Sequence[int] = (), title: str = "") -> Path:
    """Root-locus branches with the imaginary axis; 'x' marks the start, '+' the end."""
    keep = [b for b in range(rl.branches.shape[1]) if b not in set(exclude)]
    pts = rl.branches[:, keep]
    re_lo, re_hi = _pad(np.append(pts.real.ravel(), 0.0))
    im_lo, im_hi = _pad(pts.imag.ravel())
    c = Canvas(Frame((re_lo, re_hi), (im_lo, im_hi)), title)
    c.polyline([0.0, 0.0], [im_lo, im_hi], "black", 1.0)
    for k, b in enumerate(keep):
        col = PALETTE[k % len(PALETTE)]
        z = rl.branches[:, b]
        c.polyline(z.real, z.imag, col)
        c.marker(z[0].real, z[0].imag, "x", col)
        c.marker(z[-1].real, z[-1].imag, "+", col)
    c.axes("Re (nondimensional)", "Im (nondimensional)")
    return c.save(path)


def phase(x, y, path: Union[str, Path], highlight: Optional[tuple] = None,
          labels: tuple[str, str] = ("x", "y"), title: str = "") -> Path:
    """Phase portrait; ``highlight`` (xs, ys) is drawn on top in red."""
    xs = np.concatenate([np.asarray(x), np.asarray(highlight[0])]) if highlight else np.asarray(x)
    ys = np.concatenate([np.asarray(y), np.asarray(highlight[1])]) if highlight else np.asarray(y)
    c = Canvas(Frame(_pad(xs), _pad(ys)), title)
    c.polyline(x, y, "#7f7f7f", 1.0)
    if highlight is not None:
        c.polyline(highlight[0], highlight[1], BOUNDARY, 2.0)
    c.axes(*labels)
    return c.save(path)


def _pad(v: Iterable[float]) -> tuple[float, float]:
    a = np.asarray(list(v) if not isinstance(v, np.ndarray) else v, dtype=float)
    a = a[np.isfinite(a)]
    if a.size == 0:
        return (-1.0, 1.0)
    lo, hi = float(a.min()), float(a.max())
    span = hi - lo if hi > lo else max(abs(hi), 1.0)
    return (lo - 0.05 * span, hi + 0.05 * span)
