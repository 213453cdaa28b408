"""Static SVG plot of log10 eps against n with fitted model overlays."""
from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import numpy as np

from .decay import DecayFit

__all__ = ["emit_plot", "PlotFrame"]

WIDTH, HEIGHT = 720, 480
MARGIN = dict(left=70, right=200, top=30, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _series(curve) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Accept ``{"n": [...], name: [...], ...}`` or ``{name: [(n, eps), ...]}``."""
    if "n" in curve:
        n = np.asarray(curve["n"], dtype=float)
        return {k: (n, np.asarray(v, dtype=float)) for k, v in curve.items() if k != "n"}
    out = {}
    for k, pts in curve.items():
        arr = np.asarray(list(pts), dtype=float).reshape(-1, 2)
        out[k] = (arr[:, 0], arr[:, 1])
    return out


class PlotFrame:
    """Data-to-pixel mapping for a log10 y axis."""

    def __init__(self, n_lo, n_hi, y_lo, y_hi):
        if n_hi <= n_lo:
            n_lo, n_hi = n_lo - 0.5, n_hi + 0.5
        if y_hi <= y_lo:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        self.n_lo, self.n_hi, self.y_lo, self.y_hi = n_lo, n_hi, y_lo, y_hi
        self.x0 = MARGIN["left"]
        self.x1 = WIDTH - MARGIN["right"]
        self.y0 = HEIGHT - MARGIN["bottom"]
        self.y1 = MARGIN["top"]

    def px(self, n, eps):
        n = np.asarray(n, dtype=float)
        ly = np.log10(np.asarray(eps, dtype=float))
        x = self.x0 + (n - self.n_lo) / (self.n_hi - self.n_lo) * (self.x1 - self.x0)
        y = self.y0 + (ly - self.y_lo) / (self.y_hi - self.y_lo) * (self.y1 - self.y0)
        return x, y


def _points_attr(x, y) -> str:
    return " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))


def _fmt_a(a: float) -> str:
    for num, den in ((1, 3), (1, 2), (1, 1), (2, 3)):
        if abs(a - num / den) < 1e-12:
            return str(num) if den == 1 else f"{num}/{den}"
    return f"{a:.4g}"


def emit_plot(curve, fits=(), title: str = "n-width upper bounds") -> str:
    """SVG text: one data polyline per series, one dashed polyline per fit.

    ``fits`` is a sequence of ``(series_name, DecayFit)`` pairs (or a dict of
    them); each fit is drawn over the n range of its series and listed in
    the legend with its exponent, rate and R^2.
    """
    series = _series(curve)
    if not series or all(len(n) == 0 for n, _ in series.values()):
        raise ValueError("empty curve")
    fits = list(fits.items()) if isinstance(fits, dict) else list(fits)
    if not all(isinstance(f, DecayFit) for _, f in fits):
        raise TypeError("fits must be DecayFit instances")

    pos = {k: (n[e > 0], e[e > 0]) for k, (n, e) in series.items()}
    all_n = np.concatenate([n for n, _ in pos.values()] or [np.zeros(0)])
    all_e = np.concatenate([e for _, e in pos.values()] or [np.zeros(0)])
    for name, fit in fits:
        if name in pos and pos[name][0].size:
            all_e = np.concatenate([all_e, fit.model(pos[name][0])])
    if all_n.size == 0:
        all_n = np.concatenate([n for n, _ in series.values()])
        all_e = np.ones(1)
    all_e = all_e[np.isfinite(all_e) & (all_e > 0)]
    ly = np.log10(all_e)
    frame = PlotFrame(float(all_n.min()), float(all_n.max()),
                      math.floor(float(ly.min())), math.ceil(float(ly.max())))

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(WIDTH),
                     height=str(HEIGHT), viewBox=f"0 0 {WIDTH} {HEIGHT}")
    ET.SubElement(svg, "title").text = title
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    axes = ET.SubElement(svg, "g", id="axes", stroke="black", fill="none")
    ET.SubElement(axes, "rect", x=f"{frame.x0}", y=f"{frame.y1}",
                  width=f"{frame.x1 - frame.x0}", height=f"{frame.y0 - frame.y1}")
    labels = ET.SubElement(svg, "g", id="labels", fill="black")
    labels.set("font-family", "sans-serif")
    labels.set("font-size", "12")
    for k in range(int(frame.y_lo), int(frame.y_hi) + 1):
        _, y = frame.px(frame.n_lo, 10.0**k)
        ET.SubElement(axes, "line", x1=f"{frame.x0 - 5}", x2=f"{frame.x0}",
                      y1=f"{y:.3f}", y2=f"{y:.3f}")
        t = ET.SubElement(labels, "text", x=f"{frame.x0 - 8}", y=f"{y + 4:.3f}")
        t.set("text-anchor", "end")
        t.text = f"1e{k}"
    for n in np.unique(np.linspace(frame.n_lo, frame.n_hi, 6).round()):
        x, _ = frame.px(n, 10.0**frame.y_lo)
        ET.SubElement(axes, "line", x1=f"{x:.3f}", x2=f"{x:.3f}",
                      y1=f"{frame.y0}", y2=f"{frame.y0 + 5}")
        t = ET.SubElement(labels, "text", x=f"{x:.3f}", y=f"{frame.y0 + 20}")
        t.set("text-anchor", "middle")
        t.text = f"{n:g}"
    t = ET.SubElement(labels, "text", x=f"{(frame.x0 + frame.x1) / 2}", y=f"{HEIGHT - 10}")
    t.set("text-anchor", "middle")
    t.text = "n"
    t = ET.SubElement(labels, "text", x="15", y=f"{(frame.y0 + frame.y1) / 2}",
                      transform=f"rotate(-90 15 {(frame.y0 + frame.y1) / 2})")
    t.set("text-anchor", "middle")
    t.text = "eps (log10 scale)"

    data = ET.SubElement(svg, "g", id="data", fill="none")
    color = {}
    for i, (name, (n, e)) in enumerate(pos.items()):
        color[name] = COLORS[i % len(COLORS)]
        if n.size == 0:
            continue
        x, y = frame.px(n, e)
        pl = ET.SubElement(data, "polyline", points=_points_attr(x, y), stroke=color[name])
        pl.set("stroke-width", "1.5")
        pl.set("data-series", name)

    legend = ET.SubElement(svg, "g", id="legend")
    legend.set("font-family", "sans-serif")
    legend.set("font-size", "11")
    model = ET.SubElement(svg, "g", id="fits", fill="none")
    for j, (name, fit) in enumerate(fits):
        n = pos.get(name, (np.zeros(0),))[0]
        if n.size == 0:
            continue
        stroke = color.get(name, COLORS[j % len(COLORS)])
        x, y = frame.px(n, fit.model(n))
        pl = ET.SubElement(model, "polyline", points=_points_attr(x, y), stroke=stroke)
        pl.set("stroke-dasharray", "5,3")
        pl.set("data-series", name)
        pl.set("data-fit", _fmt_a(fit.a))
        r2 = f"{fit.r2:.4f}" if fit.r2_defined else "n/a"
        t = ET.SubElement(legend, "text", x=f"{frame.x1 + 10}", y=f"{frame.y1 + 14 + 16 * j}",
                          fill=stroke)
        t.set("class", "legend-entry")
        t.text = f"{name}: a={_fmt_a(fit.a)} b={fit.b:.4g} R2={r2}"

    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"
