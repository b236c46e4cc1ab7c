"""Keep edge points whose gradient points away from the pith; extract the slice border."""

from __future__ import annotations

import cv2
import numpy as np

from .geometry import EdgeCurve

BORDER_SIGMA = 11
BORDER_PAD = 3


def gradient_angles(points: np.ndarray, grads: np.ndarray, cy: float, cx: float) -> np.ndarray:
    """Angle in degrees between pith->point and the gradient; NaN when undefined."""
    v = points - np.array([cx, cy])
    nv = np.hypot(v[:, 0], v[:, 1])
    ng = np.hypot(grads[:, 0], grads[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = (v[:, 0] * grads[:, 0] + v[:, 1] * grads[:, 1]) / (nv * ng)
    ang = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    ang[(nv == 0) | (ng == 0)] = np.nan
    return ang


def _point_gradients(curve: EdgeCurve, grad) -> np.ndarray:
    if curve.gradients is not None:
        return curve.gradients
    h, w = grad.gx.shape
    xi = np.clip(np.rint(curve.points[:, 0]).astype(int), 0, w - 1)
    yi = np.clip(np.rint(curve.points[:, 1]).astype(int), 0, h - 1)
    return np.column_stack([grad.gx[yi, xi], grad.gy[yi, xi]])


def filter_curves(curves, cy: float, cx: float, grad, alpha: float = 30.0) -> list:
    """Drop points with angle >= alpha and split curves where points were removed."""
    out = []
    for curve in curves:
        grads = _point_gradients(curve, grad)
        ang = gradient_angles(curve.points, grads, cy, cx)
        keep = ang < alpha  # NaN compares False: undefined angles are dropped
        if not keep.any():
            continue
        # runs of consecutive kept points
        edges = np.flatnonzero(np.diff(np.concatenate([[0], keep.view(np.int8), [0]])))
        runs = [np.arange(a, b) for a, b in zip(edges[::2], edges[1::2])]
        closed = len(curve) > 2 and np.array_equal(curve.points[0], curve.points[-1])
        if closed and len(runs) > 1 and keep[0] and keep[-1]:
            # the run through the closing point is one piece of edge
            runs[0] = np.concatenate([runs.pop()[:-1], runs[0]])
        for idx in runs:
            if len(idx) >= 2:
                out.append(EdgeCurve(len(out), curve.points[idx], grads[idx], curve.kind))
    return out


def _rectangle(h: int, w: int, curve_id: int) -> EdgeCurve:
    pts = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1], [0, 0]], float)
    return EdgeCurve(curve_id, pts, None, "border")


def get_border_curve(img, curves) -> EdgeCurve:
    """Closed polyline around the slice, slightly inside its silhouette.

    The background mask is blurred and every non-zero pixel kept, which grows
    the background into the wood; the hole left for the slice is traced.
    """
    gray = getattr(img, "gray", img)
    h, w = gray.shape
    curve_id = len(curves)
    mask = np.where(gray == 255, 255, 0).astype(np.uint8)
    if not mask.any():
        return _rectangle(h, w, curve_id)
    mask = cv2.GaussianBlur(mask, (0, 0), BORDER_SIGMA)
    mask = np.where(mask > 0, 255, 0).astype(np.uint8)
    mask = np.pad(mask, BORDER_PAD, mode="constant", constant_values=255)
    contours, _ = cv2.findContours(mask, cv2.RETR_LIST, cv2.CHAIN_APPROX_NONE)
    half = h * w / 2.0
    best, best_key = None, None
    for c in contours:
        if len(c) < 3:
            continue
        area = cv2.contourArea(c)
        key = (abs(area - half), -area)
        if best_key is None or key < best_key:
            best, best_key = c, key
    if best is None:
        return _rectangle(h, w, curve_id)
    pts = best[:, 0, :].astype(float) - BORDER_PAD
    pts = np.vstack([pts, pts[:1]])
    return EdgeCurve(curve_id, pts, None, "border")


def filter_edges(curves, cy: float, cx: float, grad, alpha: float, img) -> list:
    filtered = filter_curves(curves, cy, cx, grad, alpha)
    filtered.append(get_border_curve(img, filtered))
    return filtered


def border_offset(sigma: float = BORDER_SIGMA) -> float:
    """Inset of the border curve from a straight slice edge, in pixels.

    Measured on a step image with the same uint8 blur, since OpenCV's
    fixed-point kernel decides where the tail rounds to zero.
    """
    half = int(8 * sigma) + 2
    step = np.zeros((3, 2 * half), np.uint8)
    step[:, :half] = 255
    row = cv2.GaussianBlur(step, (0, 0), sigma)[1]
    return float(np.nonzero(row)[0].max() - (half - 0.5))


def angle_violations(curves, cy: float, cx: float, alpha: float) -> int:
    """Count surviving points whose angle is not below alpha (border excluded)."""
    bad = 0
    for c in curves:
        if c.kind == "border" or c.gradients is None:
            continue
        ang = gradient_angles(c.points, c.gradients, cy, cx)
        bad += int(np.sum(~(ang < alpha)))
    return bad

