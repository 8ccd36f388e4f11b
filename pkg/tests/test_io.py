import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import random_feasible, random_partition
from elastica_scatter.geometry import reconstruct_polygon
from elastica_scatter.io import (
    file_sha256,
    indicator_to_csv,
    read_far_field,
    read_shape,
    shape_from_csv,
    shape_to_csv,
    write_far_field,
    write_polygon,
    write_shape,
)
from elastica_scatter.sampling import IndicatorField
from elastica_scatter.scatter import ScatterConfig, far_field_map
from elastica_scatter.shapes import shape_library
from elastica_scatter.svg import heatmap_svg, overlay_svg

SVG = "{http://www.w3.org/2000/svg}"


def test_shape_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    m = random_feasible(17, rng, partition=random_partition(17, rng))
    write_shape(tmp_path / "m.csv", m)
    back = read_shape(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.to_vector(), m.to_vector())
    np.testing.assert_array_equal(back.partition.tau, m.partition.tau)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "1,2\n",
        "# shape-point v1, n=x\n",
        "# shape-point v1, n=2\n0.5,0\n1,3\nL,1\n",
        "# shape-point v1, n=2\n0.5,0\n1,3\nX,1\np,0,0\n",
        "# shape-point v1, n=2\n0.5,0,7\n1,3\nL,1\np,0,0\n",
        "# shape-point v1, n=2\n0.5,zero\n1,3\nL,1\np,0,0\n",
    ],
)
def test_malformed_shape_rejected(text):
    with pytest.raises(ValueError):
        shape_from_csv(text)


def test_shape_csv_layout():
    text = shape_to_csv(shape_library("circle", 4))
    rows = text.splitlines()
    assert rows[0] == "# shape-point v1, n=4"
    assert rows[-2].startswith("L,") and rows[-1].startswith("p,")


def test_far_field_roundtrip(tmp_path):
    cfg = ScatterConfig.equidistant(2.0, 3, 5, nystrom_points=32)
    ff = far_field_map(shape_library("kite", 30, scale=0.5), cfg)
    write_far_field(tmp_path / "ff.csv", ff, {"noise_level": 0.25})
    back, meta = read_far_field(tmp_path / "ff.csv")
    np.testing.assert_array_equal(back.values, ff.values)
    np.testing.assert_array_equal(back.incident_dirs, ff.incident_dirs)
    assert meta["noise_level"] == 0.25
    assert meta["norm"] == pytest.approx(ff.norm(), rel=1e-15)


def test_far_field_shape_mismatch(tmp_path):
    cfg = ScatterConfig.equidistant(2.0, 3, 5, nystrom_points=32)
    write_far_field(tmp_path / "ff.csv", far_field_map(shape_library("circle", 20), cfg))
    text = (tmp_path / "ff.csv").read_text().splitlines()
    (tmp_path / "ff.csv").write_text("\n".join(text[:-1]) + "\n")
    with pytest.raises(ValueError):
        read_far_field(tmp_path / "ff.csv")


def test_polygon_and_hash(tmp_path):
    poly = reconstruct_polygon(shape_library("circle", 8))
    write_polygon(tmp_path / "p.csv", poly)
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "x,y" and len(rows) == 10
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1), poly)
    assert len(file_sha256(tmp_path / "p.csv")) == 64


def _field():
    x = np.linspace(-1, 1, 4)
    y = np.linspace(-1, 1, 3)
    xx, yy = np.meshgrid(x, y)
    return IndicatorField(x, y, 1 + xx**2 + yy**2)


def test_indicator_csv():
    rows = indicator_to_csv(_field()).splitlines()
    assert rows[0] == "z_x,z_y,chi,inv_chi"
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    assert data.shape == (12, 4)
    np.testing.assert_allclose(data[:, 2] * data[:, 3], 1.0, rtol=1e-15)


def test_svg_documents_parse():
    circle = reconstruct_polygon(shape_library("circle", 20))
    root = ET.fromstring(overlay_svg({"truth": circle, "initial": 0.5 * circle, "reconstruction": circle}))
    assert root.tag == SVG + "svg"
    styles = [p.get("stroke-dasharray") for p in root.iter(SVG + "polyline")]
    assert len(styles) == 3 and styles[2] is None
    heat = ET.fromstring(heatmap_svg(_field(), {"level_line": 0.5 * circle}))
    assert len(list(heat.iter(SVG + "rect"))) == 13
    assert len(list(heat.iter(SVG + "polyline"))) == 1
