import xml.etree.ElementTree as ET

import numpy as np
import pytest

from knwidth.decay import fit_decay
from knwidth.plot import emit_plot

NS = {"s": "http://www.w3.org/2000/svg"}


def _curve():
    n = np.arange(1, 21)
    return {"n": n.tolist(), "eps_u": (2 * np.exp(-0.9 * n ** (1 / 3))).tolist(),
            "eps_p": (0.5 * np.exp(-0.6 * n ** (1 / 3))).tolist()}


def _points(pl):
    return np.array([[float(v) for v in p.split(",")] for p in pl.get("points").split()])


def test_svg_structure_and_overlay():
    curve = _curve()
    fits = [(k, fit_decay(list(zip(curve["n"], curve[k])))) for k in ("eps_u", "eps_p")]
    root = ET.fromstring(emit_plot(curve, fits))
    data = root.findall("s:g[@id='data']/s:polyline", NS)
    model = root.findall("s:g[@id='fits']/s:polyline", NS)
    assert [p.get("data-series") for p in data] == ["eps_u", "eps_p"]
    assert [p.get("data-fit") for p in model] == ["1/3", "1/3"]
    # exact data: the fitted curve lies on top of the data polyline
    for d, m in zip(data, model):
        assert np.abs(_points(d) - _points(m)).max() < 1.0
    legend = [t.text for t in root.iter("{%s}text" % NS["s"]) if t.get("class") == "legend-entry"]
    assert len(legend) == 2 and legend[0].startswith("eps_u: a=1/3 b=0.9")


def test_log_axis_orders_points():
    root = ET.fromstring(emit_plot(_curve()))
    pts = _points(root.find("s:g[@id='data']/s:polyline", NS))
    assert np.all(np.diff(pts[:, 0]) > 0)
    assert np.all(np.diff(pts[:, 1]) > 0)  # smaller eps is lower on the page


def test_no_fits_no_legend_and_pair_input():
    svg = emit_plot({"s": [(1, 1.0), (2, 0.1), (3, 0.01)]})
    root = ET.fromstring(svg)
    assert not root.findall("s:g[@id='fits']/s:polyline", NS)
    assert not [t for t in root.iter("{%s}text" % NS["s"]) if t.get("class") == "legend-entry"]


def test_errors():
    with pytest.raises(ValueError):
        emit_plot({})
    with pytest.raises(TypeError):
        emit_plot(_curve(), [("eps_u", object())])
