from __future__ import annotations

import hashlib
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from gazestats.directional import GridConfig, run_grid
from gazestats.geometry import angles_from_direction
from gazestats.outputs import write_outputs
from gazestats.render import colormap

NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def cells(small_dataset):
    # lower field removed so some cells are invalid
    _, el = angles_from_direction(small_dataset.d_gt)
    return run_grid(small_dataset.subset(el > -20), GridConfig(min_cell_samples=60))


def test_manifest_lists_all_files(tmp_path, cells):
    assert len(cells) == 361
    manifest = write_outputs(cells, None, tmp_path)
    assert sorted(manifest) == [
        "grid.csv", "heatmap_bias.svg", "heatmap_mean_error.svg", "heatmap_sigma_major.svg",
        "heatmap_sigma_minor.svg", "quiver_bias.svg",
    ]
    for name, digest in manifest.items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest


def test_format_selection(tmp_path, cells):
    assert list(write_outputs(cells, {"extra.csv": "a\n1\n"}, tmp_path / "c", "csv")) == ["extra.csv", "grid.csv"]
    assert all(n.endswith(".svg") for n in write_outputs(cells, None, tmp_path / "s", "svg"))
    with pytest.raises(ValueError):
        write_outputs(cells, None, tmp_path, "png")


def test_byte_identical(tmp_path, cells):
    a = write_outputs(cells, None, tmp_path / "a")
    b = write_outputs(cells, None, tmp_path / "b")
    assert a == b


def test_invalid_cells_hatched_not_interpolated(tmp_path, cells):
    write_outputs(cells, None, tmp_path, "svg")
    invalid = {(c.az_deg, c.el_deg) for c in cells if not c.valid}
    valid = {(c.az_deg, c.el_deg) for c in cells if c.valid}
    assert invalid and valid
    for name in ("heatmap_bias.svg", "heatmap_sigma_major.svg", "quiver_bias.svg"):
        root = ET.parse(tmp_path / name).getroot()
        rects = [r for r in root.iter(f"{NS}rect") if r.get("data-az") is not None]
        hatched = {(float(r.get("data-az")), float(r.get("data-el"))) for r in rects if r.get("class") == "invalid"}
        assert hatched == invalid
        for r in rects:
            if r.get("class") == "invalid":
                assert r.get("fill") == "url(#hatch)" and r.get("data-reason")
                assert r.get("data-value") is None
        colored = {(float(r.get("data-az")), float(r.get("data-el"))) for r in rects if r.get("class") == "cell"}
        if name.startswith("heatmap"):
            assert colored == valid


def test_color_scale_annotated(tmp_path, cells):
    write_outputs(cells, None, tmp_path, "svg")
    root = ET.parse(tmp_path / "heatmap_sigma_minor.svg").getroot()
    texts = {t.get("class"): t.text for t in root.iter(f"{NS}text") if t.get("class")}
    lo = min(c.sigma_minor_deg for c in cells if c.valid)
    hi = max(c.sigma_minor_deg for c in cells if c.valid)
    assert texts["scale-min"] == f"min {lo:.3f} deg"
    assert texts["scale-max"] == f"max {hi:.3f} deg"
    lines = list(root.iter(f"{NS}line"))
    assert len([l for l in lines if l.get("x1")]) >= sum(c.valid for c in cells)


def test_colormap_endpoints():
    assert colormap(0.0) == "#440154"
    assert colormap(1.0) == "#fde725"
    assert colormap(-3) == colormap(0.0)
    assert np.isfinite(int(colormap(0.37)[1:], 16))
