"""Minimal dependency-free SVG emission: scatter, histogram, box plots.

Just enough to eyeball results; not a plotting library.
"""

from __future__ import annotations

import math

import numpy as np

_W, _H = 480.0, 360.0
_ML, _MR, _MT, _MB = 60.0, 15.0, 25.0, 45.0


def _finite(a):
    a = np.asarray(a, dtype=float).ravel()
    return a[np.isfinite(a)]


class _Canvas:
    def __init__(self, title, xlabel, ylabel, xlim, ylim, xlog=False, ylog=False):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W:.0f}" height="{_H:.0f}" '
            f'viewBox="0 0 {_W:.0f} {_H:.0f}" font-family="sans-serif" font-size="11">',
            f'<rect width="{_W:.0f}" height="{_H:.0f}" fill="white"/>',
            f'<text x="{_W/2:.1f}" y="15" text-anchor="middle" font-size="13">{title}</text>',
            f'<text x="{_W/2:.1f}" y="{_H-8:.1f}" text-anchor="middle">{xlabel}</text>',
            f'<text x="14" y="{_H/2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {_H/2:.1f})">{ylabel}</text>',
        ]
        self.xlog, self.ylog = xlog, ylog
        self.x0, self.x1 = self._expand(xlim, xlog)
        self.y0, self.y1 = self._expand(ylim, ylog)
        self._axes()

    @staticmethod
    def _expand(lim, log):
        lo, hi = float(lim[0]), float(lim[1])
        if log:
            lo = max(lo, 1e-300)
            hi = max(hi, lo * 10)
            return math.log10(lo), math.log10(hi)
        if hi <= lo:
            hi = lo + 1.0
        pad = 0.05 * (hi - lo)
        return lo - pad, hi + pad

    def xpix(self, x):
        v = math.log10(max(x, 1e-300)) if self.xlog else x
        t = (v - self.x0) / (self.x1 - self.x0)
        return _ML + t * (_W - _ML - _MR)

    def ypix(self, y):
        v = math.log10(max(y, 1e-300)) if self.ylog else y
        t = (v - self.y0) / (self.y1 - self.y0)
        return _H - _MB - t * (_H - _MT - _MB)

    def _axes(self):
        self.parts.append(
            f'<rect x="{_ML}" y="{_MT}" width="{_W-_ML-_MR:.1f}" '
            f'height="{_H-_MT-_MB:.1f}" fill="none" stroke="black"/>'
        )
        for axis in ("x", "y"):
            log = self.xlog if axis == "x" else self.ylog
            lo, hi = (self.x0, self.x1) if axis == "x" else (self.y0, self.y1)
            ticks = np.linspace(lo, hi, 5)
            for t in ticks:
                val = 10**t if log else t
                label = f"{val:.3g}"
                if axis == "x":
                    px = _ML + (t - lo) / (hi - lo) * (_W - _ML - _MR)
                    self.parts.append(
                        f'<line x1="{px:.1f}" y1="{_H-_MB:.1f}" x2="{px:.1f}" '
                        f'y2="{_H-_MB+4:.1f}" stroke="black"/>'
                        f'<text x="{px:.1f}" y="{_H-_MB+16:.1f}" text-anchor="middle">{label}</text>'
                    )
                else:
                    py = _H - _MB - (t - lo) / (hi - lo) * (_H - _MT - _MB)
                    self.parts.append(
                        f'<line x1="{_ML-4:.1f}" y1="{py:.1f}" x2="{_ML:.1f}" '
                        f'y2="{py:.1f}" stroke="black"/>'
                        f'<text x="{_ML-7:.1f}" y="{py+4:.1f}" text-anchor="end">{label}</text>'
                    )

    def hline(self, y, color="gray", dash="4,3"):
        py = self.ypix(y)
        self.parts.append(
            f'<line x1="{_ML}" y1="{py:.1f}" x2="{_W-_MR:.1f}" y2="{py:.1f}" '
            f'stroke="{color}" stroke-dasharray="{dash}"/>'
        )

    def finish(self, comment: str = "") -> str:
        if comment:
            self.parts.append(f"<!-- {comment} -->")
        self.parts.append("</svg>")
        return "\n".join(self.parts)


def scatter_svg(
    x, y, title="", xlabel="", ylabel="", diagonal=False, colors=None, comment="", log=False
) -> str:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    both = _finite(np.concatenate([x, y]))
    lim = (both.min(), both.max()) if len(both) else (0, 1)
    cv = _Canvas(title, xlabel, ylabel, lim, lim, xlog=log, ylog=log)
    if diagonal:
        cv.parts.append(
            f'<line x1="{cv.xpix(lim[0]):.1f}" y1="{cv.ypix(lim[0]):.1f}" '
            f'x2="{cv.xpix(lim[1]):.1f}" y2="{cv.ypix(lim[1]):.1f}" stroke="gray"/>'
        )
    for i in range(len(x)):
        col = colors[i] if colors is not None else "steelblue"
        cv.parts.append(
            f'<circle cx="{cv.xpix(x[i]):.1f}" cy="{cv.ypix(y[i]):.1f}" r="2" '
            f'fill="{col}" fill-opacity="0.55"/>'
        )
    return cv.finish(comment)


def histogram_svg(values, bins=40, title="", xlabel="", ylabel="count", comment="", log=False) -> str:
    vals = _finite(values)
    if len(vals) == 0:
        vals = np.zeros(1)
    if log:
        vals = vals[vals > 0]
        edges = np.logspace(
            math.log10(max(vals.min(), 1e-12)), math.log10(max(vals.max(), 1e-11)), bins + 1
        )
    else:
        edges = np.linspace(vals.min(), vals.max() or 1.0, bins + 1)
    counts, edges = np.histogram(vals, bins=edges)
    cv = _Canvas(
        title, xlabel, ylabel, (edges[0], edges[-1]), (0, max(counts.max(), 1)), xlog=log
    )
    for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
        if c == 0:
            continue
        x0, x1 = cv.xpix(e0), cv.xpix(e1)
        y0, y1 = cv.ypix(0), cv.ypix(c)
        cv.parts.append(
            f'<rect x="{x0:.1f}" y="{y1:.1f}" width="{max(x1-x0-0.5,0.5):.1f}" '
            f'height="{max(y0-y1,0):.1f}" fill="steelblue" fill-opacity="0.8"/>'
        )
    return cv.finish(comment)


def boxplot_svg(
    groups: dict, title="", xlabel="", ylabel="", refline=None, comment="", ylog=False
) -> str:
    """groups: ordered mapping of label -> 1-D values."""
    labels = list(groups)
    stats = []
    allv = []
    for lbl in labels:
        v = _finite(groups[lbl])
        if ylog:
            v = v[v > 0]
        if len(v) == 0:
            v = np.array([1e-12 if ylog else 0.0])
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        lo, hi = v.min(), v.max()
        stats.append((lo, q1, med, q3, hi))
        allv.append(v)
    allv = np.concatenate(allv)
    ylim = (allv.min(), allv.max())
    if refline is not None:
        ylim = (min(ylim[0], refline), max(ylim[1], refline))
    cv = _Canvas(title, xlabel, ylabel, (-0.5, len(labels) - 0.5), ylim, ylog=ylog)
    for i, (lbl, (lo, q1, med, q3, hi)) in enumerate(zip(labels, stats)):
        cx = cv.xpix(i)
        w = min(30.0, 0.6 * (_W - _ML - _MR) / max(len(labels), 1))
        cv.parts.append(
            f'<line x1="{cx:.1f}" y1="{cv.ypix(lo):.1f}" x2="{cx:.1f}" y2="{cv.ypix(hi):.1f}" stroke="black"/>'
            f'<rect x="{cx-w/2:.1f}" y="{cv.ypix(q3):.1f}" width="{w:.1f}" '
            f'height="{abs(cv.ypix(q1)-cv.ypix(q3)):.1f}" fill="lightsteelblue" stroke="black"/>'
            f'<line x1="{cx-w/2:.1f}" y1="{cv.ypix(med):.1f}" x2="{cx+w/2:.1f}" '
            f'y2="{cv.ypix(med):.1f}" stroke="firebrick" stroke-width="2"/>'
            f'<text x="{cx:.1f}" y="{_H-_MB+16:.1f}" text-anchor="middle">{lbl}</text>'
        )
    if refline is not None:
        cv.hline(refline)
    return cv.finish(comment)
