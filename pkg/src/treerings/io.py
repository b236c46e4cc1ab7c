"""Images, Labelme ring files, overlays and result tables."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

DT_COLOR = (255, 0, 0)
GT_COLOR = (0, 200, 0)
LABELME_VERSION = "5.0.1"
REPORT_FIELDS = ["name", "TP", "FP", "TN", "FN", "P", "R", "F", "RMSE", "time_sec"]


def load_image(path) -> np.ndarray:
    """RGB uint8 array; raises OSError when the file cannot be decoded."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def save_image(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, np.uint8)).save(path)


def chains_to_labelme(rings, working_shape, original_shape, pith=None, image_path: str = "") -> dict:
    """Polygon per ring (innermost first), node coordinates mapped back to the original image."""
    hw, ww = working_shape[:2]
    ho, wo = original_shape[:2]
    sx, sy = wo / ww, ho / hw
    shapes = []
    for i, ring in enumerate(rings):
        pts = [[float(n.x * sx), float(n.y * sy)] for n in sorted(ring.nodes, key=lambda n: n.ray)]
        shapes.append({"label": str(i + 1), "points": pts, "group_id": None,
                       "shape_type": "polygon", "flags": {}})
    doc = {
        "version": LABELME_VERSION,
        "flags": {},
        "shapes": shapes,
        "imagePath": str(image_path),
        "imageData": None,
        "imageHeight": int(ho),
        "imageWidth": int(wo),
    }
    if pith is not None:
        doc["pith"] = [float(pith[0] * sy), float(pith[1] * sx)]
    return doc


def validate_labelme(doc) -> None:
    if not isinstance(doc, dict) or not isinstance(doc.get("shapes"), list):
        raise ValueError("not a Labelme document: missing 'shapes' list")
    for k in ("imageHeight", "imageWidth"):
        if k in doc and doc[k] is not None and not isinstance(doc[k], int):
            raise ValueError(f"'{k}' must be an integer")
    for i, s in enumerate(doc["shapes"]):
        if not isinstance(s, dict) or s.get("shape_type", "polygon") != "polygon":
            raise ValueError(f"shape {i} is not a polygon")
        pts = s.get("points")
        if not isinstance(pts, list) or len(pts) < 3:
            raise ValueError(f"shape {i} needs at least 3 points")
        for p in pts:
            if not (isinstance(p, (list, tuple)) and len(p) == 2):
                raise ValueError(f"shape {i} has a malformed point {p!r}")


def write_labelme(path, doc: dict) -> None:
    validate_labelme(doc)
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def read_labelme(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    validate_labelme(doc)
    return doc


def labelme_polygons(doc: dict) -> list[np.ndarray]:
    return [np.asarray(s["points"], float) for s in doc["shapes"]]


def render_overlay(image: np.ndarray, rings=(), gt=(), thickness: int = 2) -> np.ndarray:
    """Draw detections (red) and optional GT polygons (green) on a copy of ``image``.

    ``rings`` and ``gt`` are sequences of (n, 2) point arrays in image coordinates.
    """
    out = np.ascontiguousarray(np.asarray(image, np.uint8).copy())
    if out.ndim == 2:
        out = np.repeat(out[..., None], 3, axis=2)
    for polys, color in ((gt, GT_COLOR), (rings, DT_COLOR)):
        for p in polys:
            pts = np.rint(np.asarray(p, float)).astype(np.int32).reshape(-1, 1, 2)
            cv2.polylines(out, [pts], True, color, thickness, cv2.LINE_AA)
    return out


def ring_points(rings) -> list[np.ndarray]:
    return [np.array([[n.x, n.y] for n in sorted(r.nodes, key=lambda n: n.ray)]) for r in rings]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.3f}"
    return v


def write_report_csv(path, rows) -> None:
    """Rows are dicts keyed by :data:`REPORT_FIELDS`; missing fields stay empty."""
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, extrasaction="ignore")
        wr.writeheader()
        for row in rows:
            wr.writerow({k: _fmt(row.get(k)) for k in REPORT_FIELDS})
