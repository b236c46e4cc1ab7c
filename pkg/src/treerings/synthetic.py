"""Synthetic cross-section images with exactly known ring boundaries.

Each annual boundary at radius ``R_k`` is a dark-to-light step going outward:
the last 15% of every ring is dark latewood (40) and the rest light earlywood
(200), with 2 px linear ramps at each transition.  Angular deformation scales
all rings by the same smooth factor ``1 + eps * s(theta)``, so deformed rings
never cross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARLYWOOD = 200.0
LATEWOOD = 40.0
LATEWOOD_FRACTION = 0.15
RAMP = 2.0
STAIN = 50.0
GAP_LEVEL = 120.0
GT_VERTICES = 720


@dataclass
class DiskSpec:
    radii: list
    deform: float = 0.0
    crack: bool = False
    stain: bool = False
    gap: bool = False
    seed: int = 0
    size: tuple = (1500, 1500)
    pith: tuple | None = None
    margin: float = 45.0
    noise: float = 0.0

    def validate(self):
        r = np.asarray(self.radii, float)
        h, w = self.size
        if len(r) == 0:
            raise ValueError("at least one ring radius is required")
        if r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise ValueError("ring radii must be positive and strictly increasing")
        if r[-1] >= min(h, w) / 2:
            raise ValueError(f"largest radius {r[-1]} does not fit a {h}x{w} canvas")
        if not 0 <= self.deform <= 1:
            raise ValueError("deform must lie in [0, 1]")


def random_spec(seed: int, n_rings=(8, 25), size=(1500, 1500), **kw) -> DiskSpec:
    """Ring radii with irregular spacing filling most of the canvas."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_rings[0], n_rings[1] + 1))
    margin = kw.get("margin", 45.0)
    room = min(size) / 2 - margin - 10
    r_max = room * rng.uniform(0.75, 1.0)
    weights = rng.uniform(0.7, 1.3, n + 1)
    radii = np.cumsum(weights)[1:] / weights.sum() * r_max
    return DiskSpec([round(float(x), 2) for x in radii], seed=seed, size=size, **kw)


def shape_function(theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Smooth periodic function with max |s| = 1 built from harmonics 2..5."""
    amps = rng.uniform(0.3, 1.0, 4) / np.arange(2, 6)
    phases = rng.uniform(0, 2 * np.pi, 4)
    grid = np.linspace(0, 2 * np.pi, 3600, endpoint=False)

    def raw(t):
        return sum(a * np.cos(h * t + p) for a, h, p in zip(amps, range(2, 6), phases))

    return raw(theta) / np.abs(raw(grid)).max()


def _ramp(t):
    return np.clip(t / RAMP + 0.5, 0.0, 1.0)


def radial_profile(radii, rho: np.ndarray) -> np.ndarray:
    """Intensity as a function of undeformed radius."""
    radii = np.asarray(radii, float)
    out = np.full(rho.shape, EARLYWOOD)
    inner = np.concatenate([[0.0], radii[:-1]])
    for r0, r1 in zip(inner, radii):
        lw = LATEWOOD_FRACTION * (r1 - r0)
        out -= (EARLYWOOD - LATEWOOD) * (_ramp(rho - (r1 - lw)) - _ramp(rho - r1))
    return out


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def generate_disk(spec: DiskSpec):
    """Render a disk image and its ground truth.

    Returns ``(rgb, labelme)`` where ``rgb`` is uint8 (H, W, 3) with a pure white
    background and ``labelme`` a JSON-ready dict with one polygon per ring
    (labels "1".. from the pith outward) plus the pith under ``"pith"``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    h, w = spec.size
    radii = np.asarray(spec.radii, float)
    cy, cx = spec.pith if spec.pith is not None else ((h - 1) / 2.0, (w - 1) / 2.0)
    spacing = radii[-1] / len(radii)
    eps = spec.deform * spacing / radii[-1]
    rng.integers(2**32)  # reserved for the deformation shape, see shape_rng

    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    dx, dy = xx - cx, yy - cy
    r = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx) % (2 * np.pi)
    factor = 1.0 + eps * shape_function(theta, shape_rng(spec)) if eps > 0 else np.ones_like(r)
    rho = r / factor

    disk_r = radii[-1] + max(0.5 * spacing, spec.margin)
    grid = np.arange(0.0, disk_r + 2.0, 0.01)
    gray = np.interp(rho, grid, radial_profile(radii, grid))

    if spec.gap:
        t0 = rng.uniform(0, 2 * np.pi)
        width = math.radians(30)
        rad0, rad1 = radii[0] * 0.5 + radii[-1] * 0.5 * rng.uniform(0.1, 0.4), radii[-1] * rng.uniform(0.6, 0.9)
        rel = (theta - t0) % (2 * np.pi)
        ang = _smoothstep(rel / math.radians(3)) * _smoothstep((width - rel) / math.radians(3))
        ang[rel > width] = 0.0
        rad = _smoothstep((rho - rad0) / 6.0) * _smoothstep((rad1 - rho) / 6.0)
        a = ang * rad
        gray = gray * (1 - a) + GAP_LEVEL * a

    if spec.stain:
        t = rng.uniform(0, 2 * np.pi)
        dist = radii[-1] * rng.uniform(0.3, 0.8)
        sy, sx = cy + dist * math.sin(t), cx + dist * math.cos(t)
        ax, ay = rng.uniform(20, 60), rng.uniform(15, 40)
        rot = rng.uniform(0, np.pi)
        u = (xx - sx) * math.cos(rot) + (yy - sy) * math.sin(rot)
        v = -(xx - sx) * math.sin(rot) + (yy - sy) * math.cos(rot)
        e = np.sqrt((u / ax) ** 2 + (v / ay) ** 2)
        a = _smoothstep((1.0 - e) / 0.25)
        gray = gray * (1 - a) + STAIN * a

    if spec.noise > 0:
        gray = gray + np.random.default_rng(rng.integers(2**32)).normal(0, spec.noise, gray.shape)

    gray = np.clip(np.rint(gray), 0, 254)
    # one pixel of antialiasing at the disk outline, strictly below white
    edge = np.clip(rho - disk_r + 0.5, 0.0, 1.0)
    gray = np.minimum(np.rint(gray * (1 - edge) + 255 * edge), 254)
    gray[rho > disk_r + 0.5] = 255

    if spec.crack:
        t0 = rng.uniform(0, 2 * np.pi)
        half = math.radians(rng.uniform(1.5, 3.0))
        r0, r1 = radii[-1] * rng.uniform(0.2, 0.4), radii[-1] * rng.uniform(0.75, 0.95)
        rel = (theta - t0 + np.pi) % (2 * np.pi) - np.pi
        # triangle: apex at r0, opening linearly up to r1
        open_ = half * np.clip((r - r0) / (r1 - r0), 0, 1)
        gray[(r >= r0) & (r <= r1) & (np.abs(rel) <= open_)] = 255

    img = np.repeat(gray.astype(np.uint8)[..., None], 3, axis=2)
    return img, ground_truth(spec, eps, (cy, cx))


def shape_rng(spec: DiskSpec):
    rng = np.random.default_rng(spec.seed)
    return np.random.default_rng(rng.integers(2**32))


def ring_radius(spec: DiskSpec, k: int, theta: np.ndarray) -> np.ndarray:
    """Exact radius of ring ``k`` along angles ``theta`` (radians)."""
    radii = np.asarray(spec.radii, float)
    eps = spec.deform * (radii[-1] / len(radii)) / radii[-1]
    if eps == 0:
        return np.full(np.shape(theta), radii[k])
    return radii[k] * (1 + eps * shape_function(np.asarray(theta), shape_rng(spec)))


def ground_truth(spec: DiskSpec, eps: float, pith) -> dict:
    h, w = spec.size
    cy, cx = pith
    theta = np.arange(GT_VERTICES) * 2 * np.pi / GT_VERTICES
    factor = 1 + eps * shape_function(theta, shape_rng(spec)) if eps > 0 else np.ones_like(theta)
    shapes = []
    for k, rk in enumerate(spec.radii):
        rr = rk * factor
        pts = np.column_stack([cx + rr * np.cos(theta), cy + rr * np.sin(theta)])
        shapes.append({
            "label": str(k + 1),
            "points": [[round(float(x), 4), round(float(y), 4)] for x, y in pts],
            "group_id": None,
            "shape_type": "polygon",
            "flags": {},
        })
    return {
        "version": "5.0.1",
        "flags": {},
        "shapes": shapes,
        "imagePath": "",
        "imageData": None,
        "imageHeight": int(h),
        "imageWidth": int(w),
        "pith": [float(cy), float(cx)],
    }
