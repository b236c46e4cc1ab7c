"""Spatial primitives shared by every stage: points, rays, curves, nodes, chains.

Coordinates follow the image convention: ``x`` is the column, ``y`` the row and
``y`` grows downward.  Ray ``i`` points at ``i * 360 / nr`` degrees measured from
the +x axis towards +y, which is clockwise on screen.  Walking a chain from
endpoint B to endpoint A therefore visits increasing ray indices (mod ``nr``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

CENTER = "center"
BORDER = "border"
NORMAL = "normal"


class SubpixelPoint(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Ray:
    index: int
    angle_deg: float
    origin: SubpixelPoint
    tip: SubpixelPoint

    @property
    def length(self) -> float:
        return euclidean_distance(self.origin, self.tip)


@dataclass
class EdgeCurve:
    """Open polyline of subpixel edge points.

    ``gradients`` holds the (gx, gy) image gradient sampled at each point; it is
    ``None`` for curves that do not come from the edge detector (the border).
    """

    id: int
    points: np.ndarray
    gradients: np.ndarray | None = None
    kind: str = "devernay"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if self.gradients is not None:
            self.gradients = np.asarray(self.gradients, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Node:
    x: float
    y: float
    ray: int
    radius: float
    chain_id: int
    interpolated: bool = False


@dataclass(eq=False)
class Chain:
    """Angularly contiguous node sequence, ordered from endpoint B to endpoint A.

    Identity semantics (``eq=False``) keep chains usable as dict keys while the
    connecting stage renumbers ids.
    """

    id: int
    nodes: list
    nr: int
    kind: str = NORMAL
    _by_ray: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.set_nodes(self.nodes)

    def set_nodes(self, nodes: Iterable[Node]) -> None:
        nodes = list(nodes)
        if len({n.ray for n in nodes}) != len(nodes):
            raise ValueError(f"chain {self.id}: more than one node on a ray")
        if len(nodes) > self.nr:
            raise ValueError(f"chain {self.id}: {len(nodes)} nodes exceed nr={self.nr}")
        order = order_rays([n.ray for n in nodes], self.nr)
        by_ray = {n.ray: n for n in nodes}
        self.nodes = [by_ray[r] for r in order]
        self._by_ray = by_ray

    @property
    def size(self) -> int:
        return len(self.nodes)

    def __len__(self):
        return len(self.nodes)

    @property
    def is_closed(self) -> bool:
        return len(self.nodes) == self.nr

    def covers(self, threshold: float) -> bool:
        return len(self.nodes) >= threshold * self.nr

    @property
    def a(self) -> Node:
        return self.nodes[-1]

    @property
    def b(self) -> Node:
        return self.nodes[0]

    def endpoint(self, which: str) -> Node:
        return self.nodes[-1] if which == "A" else self.nodes[0]

    def node_at(self, ray: int) -> Node | None:
        return self._by_ray.get(ray)

    @property
    def rays(self) -> list[int]:
        return [n.ray for n in self.nodes]

    @property
    def ray_set(self) -> set:
        return set(self._by_ray)

    def radii(self) -> np.ndarray:
        return np.array([n.radius for n in self.nodes])

    def window(self, which: str, n: int = 20) -> list[Node]:
        """The ``n`` nodes closest to an endpoint, starting at the endpoint."""
        if which == "A":
            return self.nodes[::-1][:n]
        return self.nodes[:n]

    def reowned(self, chain_id: int) -> list[Node]:
        return [n if n.chain_id == chain_id else _with_chain(n, chain_id) for n in self.nodes]


def _with_chain(node: Node, chain_id: int) -> Node:
    return Node(node.x, node.y, node.ray, node.radius, chain_id, node.interpolated)


def order_rays(rays: Sequence[int], nr: int) -> list[int]:
    """Sort ray indices clockwise, starting right after the widest angular gap.

    For an angularly contiguous set this yields the B-to-A order.  A full set
    starts at ray 0.
    """
    if not rays:
        return []
    s = sorted(rays)
    if len(s) == nr or len(s) == 1:
        return s
    gaps = [(s[(i + 1) % len(s)] - s[i]) % nr for i in range(len(s))]
    k = int(np.argmax(gaps))
    return s[k + 1:] + s[:k + 1]


def euclidean_distance(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def radial_difference(n_j: Node, n_k: Node) -> float:
    return abs(n_j.radius - n_k.radius)


def angular_distance(theta_j: float, theta_k: float) -> float:
    """Directional angular distance in degrees, ``(theta_j - theta_k + 360) mod 360``."""
    return (theta_j - theta_k + 360.0) % 360.0


def ray_angle(index: int, nr: int) -> float:
    return index * 360.0 / nr


def ray_steps(from_ray: int, to_ray: int, nr: int) -> int:
    """Clockwise step count from ``from_ray`` to ``to_ray``."""
    return (to_ray - from_ray) % nr


def polar_point(cy: float, cx: float, radius: float, angle_deg: float) -> SubpixelPoint:
    t = math.radians(angle_deg)
    return SubpixelPoint(cx + radius * math.cos(t), cy + radius * math.sin(t))


def _exit_distance(cy, cx, dx, dy, height, width):
    # distance along (dx, dy) from the pith to the image rectangle [0,w-1]x[0,h-1]
    ts = []
    if dx > 1e-12:
        ts.append((width - 1 - cx) / dx)
    elif dx < -1e-12:
        ts.append(-cx / dx)
    if dy > 1e-12:
        ts.append((height - 1 - cy) / dy)
    elif dy < -1e-12:
        ts.append(-cy / dy)
    return min(ts)


def build_rays(nr: int, height: int, width: int, cy: float, cx: float) -> list[Ray]:
    if nr < 3:
        raise ValueError("nr must be at least 3")
    if not (0 <= cy < height and 0 <= cx < width):
        raise ValueError(f"pith ({cy}, {cx}) outside a {height}x{width} image")
    origin = SubpixelPoint(float(cx), float(cy))
    rays = []
    for i in range(nr):
        angle = ray_angle(i, nr)
        t = math.radians(angle)
        dx, dy = math.cos(t), math.sin(t)
        length = _exit_distance(cy, cx, dx, dy, height, width)
        if length <= 1e-9:
            raise ValueError(f"pith ({cy}, {cx}) lies on the image border: ray {i} has zero length")
        rays.append(Ray(i, angle, origin, SubpixelPoint(cx + length * dx, cy + length * dy)))
    return rays


def segment_intersections(p, q, a, b):
    """Intersections of segment p->q with segments a[i]->b[i].

    Returns ``(t, u)`` arrays (parameters along p->q and along each a->b) and a
    mask of segments that properly intersect.  Parallel segments never count.
    """
    p = np.asarray(p, float)
    d = np.asarray(q, float) - p
    a = np.atleast_2d(np.asarray(a, float))
    e = np.atleast_2d(np.asarray(b, float)) - a
    w = a - p
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / denom
        u = (w[:, 0] * d[1] - w[:, 1] * d[0]) / denom
    ok = (denom != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    return t, u, ok


def ray_curve_intersections(ray: Ray, curve) -> list[SubpixelPoint]:
    """Points where a ray crosses a polyline, sorted by distance from the pith."""
    pts = curve.points if isinstance(curve, EdgeCurve) else np.asarray(curve, float)
    if len(pts) < 2:
        return []
    t, _, ok = segment_intersections(ray.origin, ray.tip, pts[:-1], pts[1:])
    ts = np.sort(t[ok])
    out = []
    ox, oy = ray.origin
    dx, dy = ray.tip[0] - ox, ray.tip[1] - oy
    last = None
    for ti in ts:
        # a crossing through a shared vertex is reported by both segments
        if last is not None and abs(ti - last) < 1e-12:
            continue
        out.append(SubpixelPoint(ox + ti * dx, oy + ti * dy))
        last = ti
    return out


def chain_intersects(c1: Chain, c2: Chain) -> bool:
    return c1 is c2 or not c1.ray_set.isdisjoint(c2.ray_set)
