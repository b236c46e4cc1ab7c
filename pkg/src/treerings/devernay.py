"""Subpixel Canny edge detector with Devernay's quadratic peak correction.

Stages: Gaussian smoothing, centred-difference gradient, non-maxima suppression
with a three-point parabola offset, linking of edge points into chains and
hysteresis on the gradient modulus.  Heavy loops are compiled with numba.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.ndimage import gaussian_filter

from .geometry import EdgeCurve

TRUNCATE = 4.0
SENTINEL = -1.0


@dataclass(frozen=True)
class EdgeDetectionParams:
    sigma: float = 3.0
    th_low: float = 5.0
    th_high: float = 15.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0 <= self.th_low <= self.th_high:
            raise ValueError("thresholds must satisfy 0 <= th_low <= th_high")


@dataclass
class GradientField:
    gx: np.ndarray
    gy: np.ndarray

    @property
    def modulus(self) -> np.ndarray:
        return np.hypot(self.gx, self.gy)


def smooth(gray: np.ndarray, sigma: float) -> np.ndarray:
    return gaussian_filter(gray.astype(np.float64), sigma, mode="reflect", truncate=TRUNCATE)


def gradient(img: np.ndarray) -> GradientField:
    """Centred differences without the 1/2 factor, zero on the outer frame.

    Thresholds are expressed on this scale.
    """
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = img[:, 2:] - img[:, :-2]
    gy[1:-1, :] = img[2:, :] - img[:-2, :]
    return GradientField(gx, gy)


@njit(cache=True)
def _greater(a, b):
    if a <= b:
        return False
    return (a - b) >= 1000.0 * 2.220446049250313e-16


@njit(cache=True)
def _edge_points(gx, gy, mod):
    h, w = mod.shape
    ex = np.full(h * w, -1.0)
    ey = np.full(h * w, -1.0)
    for y in range(2, h - 2):
        for x in range(2, w - 2):
            m = mod[y, x]
            left = mod[y, x - 1]
            right = mod[y, x + 1]
            up = mod[y + 1, x]
            down = mod[y - 1, x]
            agx = abs(gx[y, x])
            agy = abs(gy[y, x])
            dx = 0
            dy = 0
            if _greater(m, left) and not _greater(right, m) and agx >= agy:
                dx = 1
            elif _greater(m, down) and not _greater(up, m) and agx <= agy:
                dy = 1
            if dx > 0 or dy > 0:
                a = mod[y - dy, x - dx]
                c = mod[y + dy, x + dx]
                off = 0.5 * (a - c) / (a - m - m + c)
                ex[y * w + x] = x + off * dx
                ey[y * w + x] = y + off * dy
    return ex, ey


@njit(cache=True)
def _chain_score(a, b, ex, ey, gxf, gyf):
    if a == b or ex[b] < 0.0:
        return 0.0
    dx = ex[b] - ex[a]
    dy = ey[b] - ey[a]
    ca = gyf[a] * dx - gxf[a] * dy
    cb = gyf[b] * dx - gxf[b] * dy
    if ca * cb <= 0.0:
        return 0.0
    # both points must see the step with the same polarity
    if gxf[a] * gxf[b] + gyf[a] * gyf[b] <= 0.0:
        return 0.0
    d = math.sqrt(dx * dx + dy * dy)
    if d == 0.0:
        return 0.0
    if ca >= 0.0:
        return 1.0 / d
    return -1.0 / d


@njit(cache=True)
def _cosine(a, b, gxf, gyf):
    na = math.sqrt(gxf[a] * gxf[a] + gyf[a] * gyf[a])
    nb = math.sqrt(gxf[b] * gxf[b] + gyf[b] * gyf[b])
    if na == 0.0 or nb == 0.0:
        return -1.0
    return (gxf[a] * gxf[b] + gyf[a] * gyf[b]) / (na * nb)


@njit(cache=True)
def _link(ex, ey, gxf, gyf, h, w, radius):
    n = h * w
    nxt = np.full(n, -1, np.int64)
    prv = np.full(n, -1, np.int64)
    for y in range(2, h - 2):
        for x in range(2, w - 2):
            a = y * w + x
            if ex[a] < 0.0:
                continue
            fwd = -1
            bck = -1
            fs = 0.0
            bs = 0.0
            fcos = -2.0
            bcos = -2.0
            for j in range(-radius, radius + 1):
                for i in range(-radius, radius + 1):
                    yy = y + j
                    xx = x + i
                    if yy < 0 or yy >= h or xx < 0 or xx >= w:
                        continue
                    b = yy * w + xx
                    s = _chain_score(a, b, ex, ey, gxf, gyf)
                    if s > 0.0:
                        c = _cosine(a, b, gxf, gyf)
                        if s > fs or (s == fs and c > fcos):
                            fs = s
                            fwd = b
                            fcos = c
                    elif s < 0.0:
                        c = _cosine(a, b, gxf, gyf)
                        if s < bs or (s == bs and c > bcos):
                            bs = s
                            bck = b
                            bcos = c
            if fwd >= 0 and nxt[a] != fwd:
                alt = prv[fwd]
                if alt < 0 or _chain_score(alt, fwd, ex, ey, gxf, gyf) < fs:
                    if nxt[a] >= 0:
                        prv[nxt[a]] = -1
                    nxt[a] = fwd
                    if alt >= 0:
                        nxt[alt] = -1
                    prv[fwd] = a
            if bck >= 0 and prv[a] != bck:
                alt = nxt[bck]
                if alt < 0 or _chain_score(alt, bck, ex, ey, gxf, gyf) > bs:
                    if alt >= 0:
                        prv[alt] = -1
                    nxt[bck] = a
                    if prv[a] >= 0:
                        nxt[prv[a]] = -1
                    prv[a] = bck
    return nxt, prv


@njit(cache=True)
def _hysteresis(ex, nxt, prv, modf, th_low, th_high):
    n = ex.shape[0]
    valid = np.zeros(n, np.bool_)
    for i in range(n):
        if ex[i] >= 0.0 and not valid[i] and modf[i] >= th_high:
            valid[i] = True
            j = i
            while j >= 0:
                k = nxt[j]
                if k < 0 or valid[k]:
                    break
                if modf[k] < th_low:
                    nxt[j] = -1
                    prv[k] = -1
                    break
                valid[k] = True
                j = k
            j = i
            while j >= 0:
                k = prv[j]
                if k < 0 or valid[k]:
                    break
                if modf[k] < th_low:
                    prv[j] = -1
                    nxt[k] = -1
                    break
                valid[k] = True
                j = k
    for i in range(n):
        if (nxt[i] >= 0 or prv[i] >= 0) and not valid[i]:
            nxt[i] = -1
            prv[i] = -1
    # a valid point may still point at a non-valid neighbour through a stale link
    for i in range(n):
        if nxt[i] >= 0 and not valid[nxt[i]]:
            nxt[i] = -1
        if prv[i] >= 0 and not valid[prv[i]]:
            prv[i] = -1
    return valid


@njit(cache=True)
def _list_chains(ex, ey, nxt, prv):
    n = ex.shape[0]
    idx = np.empty(2 * n + 1, np.int64)
    starts = np.empty(n + 1, np.int64)
    m = 0
    c = 0
    for i in range(n):
        if prv[i] >= 0 or nxt[i] >= 0:
            k = i
            while True:
                p = prv[k]
                if p < 0 or p == i:
                    break
                k = p
            starts[c] = m
            c += 1
            while k >= 0:
                idx[m] = k
                m += 1
                nk = nxt[k]
                nxt[k] = -1
                prv[k] = -1
                k = nk
    starts[c] = m
    return idx[:m], starts[:c + 1]


def detect_edges(img, params: EdgeDetectionParams = EdgeDetectionParams(), link_radius: int = 1):
    """Return the linked subpixel edge curves and the gradient field.

    ``img`` is either a :class:`PreprocessedImage` or a 2-D intensity array.
    Closed contours repeat their first point at the end.
    """
    gray = getattr(img, "gray", img)
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError("expected a single-channel image")
    support = 2 * int(math.ceil(TRUNCATE * params.sigma)) + 1
    if min(gray.shape) < max(support, 5):
        raise ValueError(f"image {gray.shape} smaller than the {support}px smoothing kernel")
    h, w = gray.shape
    field = gradient(smooth(gray, params.sigma))
    mod = field.modulus
    ex, ey = _edge_points(field.gx, field.gy, mod)
    gxf = field.gx.ravel()
    gyf = field.gy.ravel()
    nxt, prv = _link(ex, ey, gxf, gyf, h, w, link_radius)
    _hysteresis(ex, nxt, prv, mod.ravel(), params.th_low, params.th_high)
    idx, starts = _list_chains(ex, ey, nxt, prv)
    curves = []
    for c in range(len(starts) - 1):
        sel = idx[starts[c]:starts[c + 1]]
        if len(sel) < 2:
            continue
        pts = np.column_stack([ex[sel], ey[sel]])
        grads = np.column_stack([gxf[sel], gyf[sel]])
        curves.append(EdgeCurve(len(curves), pts, grads, "devernay"))
    return curves, field


def curves_to_matrix(curves) -> np.ndarray:
    """Stack curves into one (n, 2) array, each followed by a [-1, -1] row."""
    rows = []
    for c in curves:
        rows.append(c.points)
        rows.append(np.array([[SENTINEL, SENTINEL]]))
    return np.vstack(rows) if rows else np.empty((0, 2))


def matrix_to_curves(matrix: np.ndarray) -> list:
    """Inverse of :func:`curves_to_matrix`; sentinels never reach the curves."""
    curves = []
    current = []
    for row in np.asarray(matrix, float):
        if row[0] == SENTINEL and row[1] == SENTINEL:
            if len(current) >= 2:
                curves.append(EdgeCurve(len(curves), np.array(current)))
            current = []
        else:
            current.append(row)
    if len(current) >= 2:
        curves.append(EdgeCurve(len(curves), np.array(current)))
    return curves
