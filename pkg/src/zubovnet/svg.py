"""Minimal SVG line and scatter plots, written as plain text."""

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _ticks(lo, hi, n=5):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


class Figure:
    def __init__(self, xlim, ylim, width=520, height=440, title="", xlabel="", ylabel="",
                 equal_aspect=False):
        self.xlim = tuple(map(float, xlim))
        self.ylim = tuple(map(float, ylim))
        self.margin = (60, 20, 40, 50)  # left, right, top, bottom
        self.width, self.height = width, height
        if equal_aspect:
            pw = width - self.margin[0] - self.margin[1]
            ratio = (self.ylim[1] - self.ylim[0]) / (self.xlim[1] - self.xlim[0])
            self.height = int(round(pw * ratio)) + self.margin[2] + self.margin[3]
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.items = []
        self.legend = []

    def _px(self, x, y):
        left, right, top, bottom = self.margin
        pw = self.width - left - right
        ph = self.height - top - bottom
        u = left + (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * pw
        v = top + (self.ylim[1] - y) / (self.ylim[1] - self.ylim[0]) * ph
        return u, v

    def polyline(self, pts, color=PALETTE[0], width=1.5, label=None):
        pts = np.asarray(pts, dtype=float)
        if len(pts) < 2:
            return
        coords = " ".join("%.2f,%.2f" % self._px(a, b) for a, b in pts)
        self.items.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"/>')
        if label and label not in [lbl for lbl, _ in self.legend]:
            self.legend.append((label, color))

    def scatter(self, pts, color=PALETTE[0], radius=1.6, label=None, marker="dot"):
        for a, b in np.asarray(pts, dtype=float):
            u, v = self._px(a, b)
            if marker == "ring":
                self.items.append(f'<circle cx="{u:.2f}" cy="{v:.2f}" r="{radius * 1.6:.2f}" '
                                  f'fill="none" stroke="{color}" stroke-width="0.8"/>')
            else:
                self.items.append(f'<circle cx="{u:.2f}" cy="{v:.2f}" r="{radius:.2f}" '
                                  f'fill="{color}"/>')
        if label:
            self.legend.append((label, color))

    def hline(self, y, color="#888888", dash="4,3"):
        (u0, v), (u1, _) = self._px(self.xlim[0], y), self._px(self.xlim[1], y)
        self.items.append(f'<line x1="{u0:.2f}" y1="{v:.2f}" x2="{u1:.2f}" y2="{v:.2f}" '
                          f'stroke="{color}" stroke-dasharray="{dash}"/>')

    def bars(self, edges, counts, color=PALETTE[0]):
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            if c <= 0:
                continue
            u0, v0 = self._px(lo, c)
            u1, v1 = self._px(hi, 0)
            self.items.append(f'<rect x="{u0:.2f}" y="{v0:.2f}" width="{u1 - u0:.2f}" '
                              f'height="{v1 - v0:.2f}" fill="{color}" stroke="white" '
                              f'stroke-width="0.5"/>')

    def _axes(self):
        left, right, top, bottom = self.margin
        out = [f'<rect x="{left}" y="{top}" width="{self.width - left - right}" '
               f'height="{self.height - top - bottom}" fill="none" stroke="black"/>']
        y_base = self.height - bottom
        for t in _ticks(*self.xlim):
            u, _ = self._px(t, self.ylim[0])
            out.append(f'<line x1="{u:.2f}" y1="{y_base}" x2="{u:.2f}" y2="{y_base + 4}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{u:.2f}" y="{y_base + 16}" font-size="11" '
                       f'text-anchor="middle">{t:g}</text>')
        for t in _ticks(*self.ylim):
            _, v = self._px(self.xlim[0], t)
            out.append(f'<line x1="{left - 4}" y1="{v:.2f}" x2="{left}" y2="{v:.2f}" '
                       f'stroke="black"/>')
            out.append(f'<text x="{left - 7}" y="{v + 4:.2f}" font-size="11" '
                       f'text-anchor="end">{t:g}</text>')
        if self.title:
            out.append(f'<text x="{self.width / 2:.1f}" y="{top - 14}" font-size="14" '
                       f'text-anchor="middle">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{(left + self.width - right) / 2:.1f}" '
                       f'y="{self.height - 12}" font-size="12" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cy = (top + self.height - bottom) / 2
            out.append(f'<text x="16" y="{cy:.1f}" font-size="12" text-anchor="middle" '
                       f'transform="rotate(-90 16 {cy:.1f})">{escape(self.ylabel)}</text>')
        for k, (label, color) in enumerate(self.legend):
            y = top + 14 + 16 * k
            x = self.width - right - 120
            out.append(f'<line x1="{x}" y1="{y - 4}" x2="{x + 18}" y2="{y - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{x + 24}" y="{y}" font-size="11">{escape(label)}</text>')
        return out

    def to_string(self):
        left, right, top, bottom = self.margin
        clip = (f'<clipPath id="plot"><rect x="{left}" y="{top}" '
                f'width="{self.width - left - right}" '
                f'height="{self.height - top - bottom}"/></clipPath>')
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
                f'<defs>{clip}</defs>\n<rect width="100%" height="100%" fill="white"/>\n'
                f'<g clip-path="url(#plot)">\n{body}\n</g>\n' + "\n".join(self._axes())
                + "\n</svg>\n")

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_string())


def level_curve_figure(curves, region, title="Level curves V(x) = r"):
    fig = Figure((region.lower[0], region.upper[0]), (region.lower[1], region.upper[1]),
                 title=title, xlabel="x1", ylabel="x2", equal_aspect=True)
    for k, c in enumerate(sorted(curves, key=lambda c: c.level)):
        color = PALETTE[k % len(PALETTE)]
        for poly in c.polylines:
            fig.polyline(poly, color=color, label=f"r = {c.level:g}")
    return fig


def ivalue_figure(indices, values, censored, M, title="I-value plot"):
    n = max(1, int(np.max(indices)) + 1) if len(indices) else 1
    fig = Figure((0, n), (0, 1.1 * M), title=title, xlabel="sample index", ylabel="I(x)")
    values = np.asarray(values, float)
    censored = np.asarray(censored, bool)
    idx = np.asarray(indices, float)
    fig.scatter(np.column_stack([idx[~censored], values[~censored]]), PALETTE[0],
                label="converged")
    fig.scatter(np.column_stack([idx[censored], values[censored]]), PALETTE[1],
                marker="ring", label=f"z > M (shown at {M:g})")
    fig.hline(M)
    return fig


def histogram_figure(edges, counts, title, xlabel):
    edges = np.asarray(edges, float)
    top = max(1, int(np.max(counts))) if len(counts) else 1
    fig = Figure((edges[0], edges[-1]), (0, 1.05 * top), title=title, xlabel=xlabel,
                 ylabel="count")
    fig.bars(edges, counts)
    return fig
