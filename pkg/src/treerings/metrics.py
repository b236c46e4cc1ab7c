"""Influence-area evaluation of detected rings against ground truth.

Rings are compared as per-ray radii.  Each GT ring owns the band between the
midpoints to its neighbours on every ray; a detection counts for a GT ring only
when enough of its nodes fall inside that band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from .geometry import segment_intersections

GT = "gt"
DETECTION = "detection"


@dataclass
class RingPolyline:
    radii: np.ndarray  # one radius per ray, NaN where the ring has no node
    source: str = DETECTION

    def __post_init__(self):
        self.radii = np.asarray(self.radii, float)

    @property
    def nr(self) -> int:
        return len(self.radii)

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.radii)


@dataclass
class InfluencePartition:
    lower: np.ndarray  # (rings, nr)
    upper: np.ndarray

    def contains(self, i: int, radii: np.ndarray) -> np.ndarray:
        return (radii >= self.lower[i]) & (radii < self.upper[i])


@dataclass
class MetricsReport:
    TP: int
    FP: int
    FN: int
    precision: float
    recall: float
    fscore: float
    rmse: float
    per_node_abs_error: np.ndarray = field(repr=False)
    assignment: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "TP": self.TP, "FP": self.FP, "TN": 0, "FN": self.FN,
            "P": self.precision, "R": self.recall, "F": self.fscore,
            "RMSE": None if math.isnan(self.rmse) else self.rmse,
            "assignment": {str(k): v for k, v in self.assignment.items()},
        }


def ring_from_chain(chain, source=DETECTION) -> RingPolyline:
    radii = np.full(chain.nr, np.nan)
    radii[chain.rays] = chain.radii()
    return RingPolyline(radii, source)


def rasterize_gt_polygon(points, pith, nr: int = 360, source: str = GT) -> RingPolyline:
    """Sample a closed polygon at the ``nr`` ray angles.

    ``pith`` is ``(cy, cx)``; the nearest crossing is kept on each ray.
    """
    pts = np.asarray(points, float).reshape(-1, 2)
    cy, cx = pith
    if len(pts) < 3:
        raise ValueError("polygon needs at least 3 vertices")
    if cv2.pointPolygonTest(pts.astype(np.float32).reshape(-1, 1, 2), (float(cx), float(cy)), False) <= 0:
        raise ValueError("polygon does not enclose the pith")
    closed = np.vstack([pts, pts[:1]])
    reach = 2.0 * float(np.max(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy))) + 1.0
    radii = np.empty(nr)
    for i in range(nr):
        t = 2 * math.pi * i / nr
        tip = (cx + reach * math.cos(t), cy + reach * math.sin(t))
        s, u, _ = segment_intersections((cx, cy), tip, closed[:-1], closed[1:])
        # a ray through a vertex may fall between two segments by rounding
        ok = np.isfinite(s) & (s >= 0) & (s <= 1) & (u >= -1e-9) & (u <= 1 + 1e-9)
        if not ok.any():
            raise ValueError(f"ray {i} misses the polygon")
        radii[i] = float(s[ok].min()) * reach
    return RingPolyline(radii, source)


def sort_rings(rings) -> list:
    return sorted(rings, key=lambda r: float(np.nanmean(r.radii)))


def build_influence_partition(gt, border=None) -> InfluencePartition:
    """Per-ray frontiers halfway between consecutive GT rings.

    ``gt`` must be sorted from the pith outward.  The last band is open (or
    capped by ``border``, a per-ray radius array).
    """
    if not gt:
        return InfluencePartition(np.empty((0, 0)), np.empty((0, 0)))
    r = np.vstack([g.radii for g in gt])
    if np.isnan(r).any():
        raise ValueError("GT rings must have a radius on every ray")
    if len(gt) > 1 and not np.all(np.diff(r, axis=0) > 0):
        raise ValueError("GT rings cross or are not sorted radially")
    mid = (r[:-1] + r[1:]) / 2.0
    lower = np.vstack([np.zeros((1, r.shape[1])), mid])
    top = np.full((1, r.shape[1]), np.inf) if border is None else np.asarray(border, float)[None, :]
    upper = np.vstack([mid, top])
    return InfluencePartition(lower, upper)


def dist(dt: RingPolyline, gt: RingPolyline) -> float:
    """Root mean square radial difference over the rays where both rings have a node."""
    ok = dt.valid & gt.valid
    if not ok.any():
        return math.inf
    d = dt.radii[ok] - gt.radii[ok]
    return float(np.sqrt(np.mean(d * d)))


def inside_fraction(dt: RingPolyline, partition: InfluencePartition, i: int) -> float:
    ok = dt.valid
    if not ok.any():
        return 0.0
    inside = partition.contains(i, dt.radii)
    return float(np.sum(inside & ok)) / float(np.sum(ok))


def distance_matrix(dt, gt) -> np.ndarray:
    return np.array([[dist(d, g) for d in dt] for g in gt]).reshape(len(gt), len(dt))


def assign_detections(dt, gt, partition: InfluencePartition, th_pre: float = 60.0) -> dict:
    """Map GT index -> detection index.

    Every GT ring takes its nearest detection by :func:`dist`; when two want
    the same one the nearer pair wins and the other moves on to its next
    choice.  A pair is then kept only if at least ``th_pre`` percent of the
    detection's nodes lie in that GT ring's influence band.
    """
    d = distance_matrix(dt, gt)
    pairs = sorted((d[g, k], g, k) for g in range(len(gt)) for k in range(len(dt)) if np.isfinite(d[g, k]))
    matched = {}
    used = set()
    for _, g, k in pairs:
        if g in matched or k in used:
            continue
        matched[g] = k
        used.add(k)
    out = {}
    for g, k in matched.items():
        if inside_fraction(dt[k], partition, g) * 100.0 >= th_pre:
            out[g] = k
    return out


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def score(assignment: dict, dt, gt) -> MetricsReport:
    tp = len(assignment)
    fp = len(dt) - tp
    fn = len(gt) - tp
    p, r, f = prf(tp, fp, fn)
    nr = gt[0].nr if gt else (dt[0].nr if dt else 0)
    err = np.full((nr, len(gt)), np.nan)
    dists = []
    for g, k in assignment.items():
        err[:, g] = np.abs(dt[k].radii - gt[g].radii)
        dists.append(dist(dt[k], gt[g]))
    rmse = float(np.mean(dists)) if dists else math.nan
    return MetricsReport(tp, fp, fn, p, r, f, rmse, err, dict(assignment))


def evaluate(dt, gt, th_pre: float = 60.0, border=None) -> MetricsReport:
    gt = sort_rings(gt)
    partition = build_influence_partition(gt, border)
    return score(assign_detections(dt, gt, partition, th_pre), dt, gt)


def error_heatmap(report: MetricsReport, gt, pith, shape, vmax: float | None = None) -> np.ndarray:
    """Colour raster of the per-node absolute error drawn along the GT rings."""
    h, w = shape[:2]
    canvas = np.full((h, w, 3), 255, np.uint8)
    err = report.per_node_abs_error
    finite = err[np.isfinite(err)]
    top = vmax or (float(finite.max()) if finite.size else 1.0) or 1.0
    cy, cx = pith
    for g, ring in enumerate(gt):
        for i in range(ring.nr):
            e = err[i, g]
            if not np.isfinite(e):
                continue
            t = 2 * math.pi * i / ring.nr
            x = int(round(cx + ring.radii[i] * math.cos(t)))
            y = int(round(cy + ring.radii[i] * math.sin(t)))
            level = np.uint8(min(e / top, 1.0) * 255)
            color = cv2.applyColorMap(np.array([[level]], np.uint8), cv2.COLORMAP_JET)[0, 0]
            cv2.circle(canvas, (x, y), 2, tuple(int(c) for c in color), -1)
    return canvas
