import json

import numpy as np
import pytest

from treerings.io import (DT_COLOR, GT_COLOR, REPORT_FIELDS, chains_to_labelme, labelme_polygons, load_image,
                          read_labelme, render_overlay, ring_points, save_image, validate_labelme, write_labelme,
                          write_report_csv)
from treerings.metrics import rasterize_gt_polygon

from conftest import arc


def test_rescale_to_original_resolution():
    ring = arc(range(360), 100, pith=(750, 750))
    doc = chains_to_labelme([ring], (1500, 1500), (3000, 3000), pith=(750, 750))
    pts = np.asarray(doc["shapes"][0]["points"])
    assert np.allclose(pts[0], [1700, 1500])
    assert doc["pith"] == [1500, 1500]
    assert (doc["imageHeight"], doc["imageWidth"]) == (3000, 3000)
    center = arc([0], 0.0, pith=(750, 750)).nodes[0]
    assert (center.x * 2, center.y * 2) == (1500, 1500)


def test_rescale_round_trip_below_half_pixel():
    ring = arc(range(360), lambda r: 200 + 10 * np.sin(np.radians(3 * r)), pith=(400.0, 600.0))
    doc = chains_to_labelme([ring], (800, 1200), (1000, 1500))
    pts = np.asarray(doc["shapes"][0]["points"])
    back = pts * [1200 / 1500, 800 / 1000]
    orig = np.array([[n.x, n.y] for n in ring.nodes])
    assert np.abs(back - orig).max() < 0.5


def test_empty_rings_valid_document(tmp_path):
    doc = chains_to_labelme([], (100, 100), (100, 100))
    assert doc["shapes"] == []
    write_labelme(tmp_path / "e.json", doc)
    assert read_labelme(tmp_path / "e.json")["shapes"] == []


def test_labels_and_shape_type():
    rings = [arc(range(360), r, i) for i, r in enumerate((10, 20, 30))]
    doc = chains_to_labelme(rings, (300, 300), (300, 300))
    assert [s["label"] for s in doc["shapes"]] == ["1", "2", "3"]
    assert all(s["shape_type"] == "polygon" and s["flags"] == {} for s in doc["shapes"])
    assert all(len(s["points"]) == 360 for s in doc["shapes"])


def test_round_trip_reproduces_radii(tmp_path):
    ring = arc(range(360), lambda r: 50 + 5 * np.cos(np.radians(2 * r)))
    doc = chains_to_labelme([ring], (300, 300), (300, 300), pith=(100, 100))
    write_labelme(tmp_path / "r.json", doc)
    back = read_labelme(tmp_path / "r.json")
    poly = labelme_polygons(back)[0]
    assert np.array_equal(poly, np.array([[n.x, n.y] for n in ring.nodes]))
    g = rasterize_gt_polygon(poly, tuple(back["pith"]), 360)
    assert np.allclose(g.radii, ring.radii(), atol=1e-9)


def test_validator_rejects_bad_documents(tmp_path):
    with pytest.raises(ValueError):
        validate_labelme({"shapes": [{"shape_type": "rectangle", "points": [[0, 0], [1, 1], [2, 2]]}]})
    with pytest.raises(ValueError):
        validate_labelme({"shapes": [{"shape_type": "polygon", "points": [[0, 0], [1, 1]]}]})
    with pytest.raises(ValueError):
        validate_labelme({"nothing": 1})
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ValueError):
        read_labelme(tmp_path / "bad.json")


def test_overlay_without_rings_is_copy():
    img = np.random.default_rng(0).integers(0, 255, (40, 50, 3), dtype=np.uint8)
    out = render_overlay(img)
    assert np.array_equal(out, img) and out is not img


def test_overlay_draws_both_colours_deterministically():
    img = np.full((200, 200, 3), 255, np.uint8)
    ring = arc(range(360), 50)
    gt = [np.array([[100 + 70 * np.cos(t), 100 + 70 * np.sin(t)] for t in np.linspace(0, 6.28, 100)])]
    a = render_overlay(img, ring_points([ring]), gt)
    b = render_overlay(img, ring_points([ring]), gt)
    assert np.array_equal(a, b)
    assert tuple(a[100, 150]) == DT_COLOR
    assert tuple(a[100, 170]) == GT_COLOR


def test_image_round_trip_and_unreadable(tmp_path):
    img = np.arange(60, dtype=np.uint8).reshape(4, 5, 3)
    save_image(tmp_path / "a.png", img)
    assert np.array_equal(load_image(tmp_path / "a.png"), img)
    (tmp_path / "junk.png").write_bytes(b"nope")
    with pytest.raises(OSError):
        load_image(tmp_path / "junk.png")
    with pytest.raises(OSError):
        load_image(tmp_path / "missing.png")


def test_report_csv_header(tmp_path):
    write_report_csv(tmp_path / "r.csv", [{"name": "x", "TP": 1, "P": 0.5, "RMSE": None}])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_FIELDS) == "name,TP,FP,TN,FN,P,R,F,RMSE,time_sec"
    assert lines[1] == "x,1,,,,0.500,,,,"


def test_written_json_is_utf8(tmp_path):
    doc = chains_to_labelme([], (10, 10), (10, 10), image_path="é.png")
    write_labelme(tmp_path / "u.json", doc)
    assert json.loads((tmp_path / "u.json").read_bytes().decode("utf-8"))["imagePath"] == "é.png"
