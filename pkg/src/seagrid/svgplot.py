"""Small SVG plotting helpers: line charts and planar maps.

Only what the command line needs; no plotting dependency.  Output is
deterministic (fixed float formatting, insertion-ordered elements).
"""

from __future__ import annotations

import html
import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e5 or a < 1e-3:
        return f"{v:.1e}"
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return s


def nice_ticks(lo: float, hi: float, target: int = 5) -> list:
    """Round tick positions covering [lo, hi] on a 1/2/2.5/5 ladder."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = 0.0, 1.0
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo
    mag = 10.0 ** math.floor(math.log10(span / target))
    step = 10 * mag
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if span / (m * mag) <= target:
            step = m * mag
            break
    t = math.ceil(lo / step) * step
    out = []
    while t <= hi + 1e-9 * span:
        out.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return out


class Figure:
    """One chart.  Add series, then write(); data bounds are automatic."""

    def __init__(self, width=640, height=420, title="", xlabel="", ylabel="",
                 equal_aspect=False):
        self.width, self.height = width, height
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.equal_aspect = equal_aspect
        self._elems = []          # ("line"|"scatter"|"circle"|"vline", ...)
        self._legend = []         # (label, color, kind)
        self._color_cursor = 0

    def _color(self, color):
        if color is not None:
            return color
        c = PALETTE[self._color_cursor % len(PALETTE)]
        self._color_cursor += 1
        return c

    def line(self, xs, ys, label=None, color=None, width=1.6, dash=None):
        c = self._color(color)
        self._elems.append(("line", list(map(float, xs)),
                            list(map(float, ys)), c, width, dash))
        if label:
            self._legend.append((label, c, "line"))
        return c

    def scatter(self, xs, ys, label=None, color=None, size=3.0):
        c = self._color(color)
        self._elems.append(("scatter", list(map(float, xs)),
                            list(map(float, ys)), c, size))
        if label:
            self._legend.append((label, c, "scatter"))
        return c

    def circle(self, cx, cy, r, label=None, color="#999999", fill="none"):
        self._elems.append(("circle", float(cx), float(cy), float(r),
                            color, fill))
        if label:
            self._legend.append((label, color, "line"))

    def vline(self, x, label=None, color="#aaaaaa", dash="4,3"):
        self._elems.append(("vline", float(x), color, dash))
        if label:
            self._legend.append((label, color, "line"))

    # ------------------------------------------------------------ rendering

    def _bounds(self):
        xs, ys = [], []
        for e in self._elems:
            if e[0] in ("line", "scatter"):
                xs += e[1]
                ys += e[2]
            elif e[0] == "circle":
                _, cx, cy, r, _, _ = e
                xs += [cx - r, cx + r]
                ys += [cy - r, cy + r]
            elif e[0] == "vline":
                xs.append(e[1])
        if not xs:
            xs = [0.0, 1.0]
        if not ys:
            ys = [0.0, 1.0]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x0 == x1:
            x0, x1 = x0 - 1.0, x1 + 1.0
        if y0 == y1:
            y0, y1 = y0 - 1.0, y1 + 1.0
        padx, pady = 0.04 * (x1 - x0), 0.06 * (y1 - y0)
        return x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def render(self) -> str:
        ml, mr, mt, mb = 62, 16, 34, 46
        pw, ph = self.width - ml - mr, self.height - mt - mb
        x0, x1, y0, y1 = self._bounds()
        if self.equal_aspect:
            sx, sy = pw / (x1 - x0), ph / (y1 - y0)
            s = min(sx, sy)
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            x0, x1 = cx - 0.5 * pw / s, cx + 0.5 * pw / s
            y0, y1 = cy - 0.5 * ph / s, cy + 0.5 * ph / s

        def X(v):
            return ml + (v - x0) / (x1 - x0) * pw

        def Y(v):
            return mt + ph - (v - y0) / (y1 - y0) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" '
               f'width="{self.width}" height="{self.height}" '
               f'viewBox="0 0 {self.width} {self.height}">',
               f'<rect width="{self.width}" height="{self.height}" '
               f'fill="white"/>',
               f'<g font-family="sans-serif" font-size="12">']
        # frame and ticks
        out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
                   f'fill="none" stroke="#333333"/>')
        for t in nice_ticks(x0, x1):
            px = X(t)
            out.append(f'<line x1="{_fmt(px)}" y1="{mt + ph}" '
                       f'x2="{_fmt(px)}" y2="{mt + ph + 4}" stroke="#333"/>')
            out.append(f'<text x="{_fmt(px)}" y="{mt + ph + 17}" '
                       f'text-anchor="middle">{_tick_label(t)}</text>')
        for t in nice_ticks(y0, y1):
            py = Y(t)
            out.append(f'<line x1="{ml - 4}" y1="{_fmt(py)}" '
                       f'x2="{ml}" y2="{_fmt(py)}" stroke="#333"/>')
            out.append(f'<text x="{ml - 7}" y="{_fmt(py + 4)}" '
                       f'text-anchor="end">{_tick_label(t)}</text>')
        if self.title:
            out.append(f'<text x="{self.width / 2}" y="20" '
                       f'text-anchor="middle" font-size="14">'
                       f'{html.escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{ml + pw / 2}" y="{self.height - 10}" '
                       f'text-anchor="middle">{html.escape(self.xlabel)}</text>')
        if self.ylabel:
            yc = mt + ph / 2
            out.append(f'<text x="14" y="{_fmt(yc)}" text-anchor="middle" '
                       f'transform="rotate(-90 14 {_fmt(yc)})">'
                       f'{html.escape(self.ylabel)}</text>')

        out.append(f'<clipPath id="plot"><rect x="{ml}" y="{mt}" '
                   f'width="{pw}" height="{ph}"/></clipPath>')
        out.append('<g clip-path="url(#plot)">')
        for e in self._elems:
            if e[0] == "line":
                _, xs, ys, color, width, dash = e
                pts = " ".join(f"{_fmt(X(a))},{_fmt(Y(b))}"
                               for a, b in zip(xs, ys))
                d = f' stroke-dasharray="{dash}"' if dash else ""
                out.append(f'<polyline points="{pts}" fill="none" '
                           f'stroke="{color}" stroke-width="{width}"{d}/>')
            elif e[0] == "scatter":
                _, xs, ys, color, size = e
                for a, b in zip(xs, ys):
                    out.append(f'<circle cx="{_fmt(X(a))}" cy="{_fmt(Y(b))}" '
                               f'r="{size}" fill="{color}"/>')
            elif e[0] == "circle":
                _, cx, cy, r, color, fill = e
                rx = abs(X(cx + r) - X(cx))
                ry = abs(Y(cy + r) - Y(cy))
                out.append(f'<ellipse cx="{_fmt(X(cx))}" cy="{_fmt(Y(cy))}" '
                           f'rx="{_fmt(rx)}" ry="{_fmt(ry)}" fill="{fill}" '
                           f'stroke="{color}" stroke-dasharray="3,3"/>')
            elif e[0] == "vline":
                _, x, color, dash = e
                out.append(f'<line x1="{_fmt(X(x))}" y1="{mt}" '
                           f'x2="{_fmt(X(x))}" y2="{mt + ph}" '
                           f'stroke="{color}" stroke-dasharray="{dash}"/>')
        out.append("</g>")
        # legend, top-right inside the frame
        for i, (label, color, kind) in enumerate(self._legend):
            ly = mt + 16 + 16 * i
            lx = ml + pw - 150
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" '
                       f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 28}" y="{ly}">'
                       f'{html.escape(label)}</text>')
        out.append("</g></svg>")
        return "\n".join(out) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
