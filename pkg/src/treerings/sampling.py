"""Sample edge curves along the rays: nodes, chains and the artificial center/border chains."""

from __future__ import annotations

import math
from bisect import bisect_left

import numpy as np

from .geometry import BORDER, CENTER, NORMAL, Chain, Node, build_rays

INWARD = "inward"
OUTWARD = "outward"


def curve_crossings(points: np.ndarray, cy: float, cx: float, nr: int):
    """Every crossing of a polyline with the ray lattice, in curve order.

    Returns ``(rays, xs, ys, radii)``.  A crossing is counted when the angular
    coordinate of the walk reaches a ray, so a vertex lying exactly on a ray is
    reported once.
    """
    pts = np.asarray(points, float)
    empty = (np.empty(0, int), np.empty(0), np.empty(0), np.empty(0))
    if len(pts) < 2:
        return empty
    step = 2 * math.pi / nr
    u = (np.arctan2(pts[:, 1] - cy, pts[:, 0] - cx) % (2 * math.pi)) / step
    du = np.diff(u)
    du = (du + nr / 2.0) % nr - nr / 2.0
    ua, ub = u[:-1], u[:-1] + du
    lo = np.where(du > 0, np.floor(ua) + 1, np.ceil(ub))
    hi = np.where(du > 0, np.floor(ub), np.ceil(ua) - 1)
    count = np.maximum(hi - lo + 1, 0).astype(int)
    count[du == 0] = 0
    if count.sum() == 0:
        return empty
    seg = np.repeat(np.arange(len(du)), count)
    first = np.repeat(np.cumsum(count) - count, count)
    offset = np.arange(len(seg)) - first
    # walk the crossed rays in travel direction
    k = np.where(du[seg] > 0, lo[seg] + offset, hi[seg] - offset).astype(int)
    theta = k * step
    d = np.column_stack([np.cos(theta), np.sin(theta)])
    pa = pts[seg]
    e = pts[seg + 1] - pa
    w = pa - np.array([cx, cy])
    den = d[:, 0] * e[:, 1] - d[:, 1] * e[:, 0]
    ok = den != 0
    t = np.zeros(len(seg))
    t[ok] = (w[ok, 0] * e[ok, 1] - w[ok, 1] * e[ok, 0]) / den[ok]
    ok &= t > 0
    k = k[ok] % nr
    t = t[ok]
    return k, cx + t * d[ok, 0], cy + t * d[ok, 1], t


def _runs(rays, xs, ys, rs, nr, limit):
    """Split a crossing sequence into angularly contiguous, ray-unique runs."""
    runs = []
    current = []
    seen = set()
    for k, x, y, r in zip(rays.tolist(), xs.tolist(), ys.tolist(), rs.tolist()):
        if limit is not None and r >= limit[k]:
            if current:
                runs.append(current)
            current, seen = [], set()
            continue
        if current:
            step = (k - current[-1][0]) % nr
            if k in seen or step not in (1, nr - 1):
                runs.append(current)
                current, seen = [], set()
        current.append((k, x, y, r))
        seen.add(k)
    if current:
        runs.append(current)
    return runs


def _join_wrapped(runs, nr):
    """On a closed curve the first and last runs may be one piece."""
    if len(runs) < 2:
        return runs
    head, tail = runs[0], runs[-1]
    if (head[0][0] - tail[-1][0]) % nr not in (1, nr - 1):
        return runs
    if len(head) + len(tail) > nr or {n[0] for n in head} & {n[0] for n in tail}:
        return runs
    return [tail + head] + runs[1:-1]


def border_chain_radii(points, cy, cx, nr, rays):
    """Innermost crossing of the border polyline on each ray (ray tip if none)."""
    k, xs, ys, rs = curve_crossings(points, cy, cx, nr)
    out = [None] * nr
    for ki, x, y, r in zip(k.tolist(), xs.tolist(), ys.tolist(), rs.tolist()):
        if out[ki] is None or r < out[ki][2]:
            out[ki] = (x, y, r)
    for i, ray in enumerate(rays):
        if out[i] is None:
            out[i] = (ray.tip.x, ray.tip.y, ray.length)
    return out


def sampling_edges(curves, cy: float, cx: float, nr: int = 360, m_c: int = 2, img=None):
    """Turn filtered curves into chains.

    The last curve is the border.  Returned chains are the normal chains first,
    then the border chain and the center chain; ``chain.id`` equals the list
    index and every node carries its chain id.
    """
    if img is not None:
        h, w = getattr(img, "gray", img).shape[:2]
    else:
        allpts = np.vstack([c.points for c in curves]) if curves else np.zeros((1, 2))
        h = int(max(allpts[:, 1].max(), cy) + 2)
        w = int(max(allpts[:, 0].max(), cx) + 2)
    rays = build_rays(nr, h, w, cy, cx)
    border_curve = None
    edge_curves = list(curves)
    if edge_curves and edge_curves[-1].kind == "border":
        border_curve = edge_curves.pop()
    limit = None
    border_nodes = None
    if border_curve is not None:
        border_nodes = border_chain_radii(border_curve.points, cy, cx, nr, rays)
        limit = [b[2] for b in border_nodes]

    chains = []
    for curve in edge_curves:
        k, xs, ys, rs = curve_crossings(curve.points, cy, cx, nr)
        if len(k) == 0:
            continue
        runs = _runs(k, xs, ys, rs, nr, limit)
        if len(curve) > 2 and np.array_equal(curve.points[0], curve.points[-1]):
            runs = _join_wrapped(runs, nr)
        for run in runs:
            if len(run) < m_c:
                continue
            cid = len(chains)
            nodes = [Node(x, y, ki, r, cid) for ki, x, y, r in run]
            chains.append(Chain(cid, nodes, nr, NORMAL))

    if border_nodes is not None:
        cid = len(chains)
        chains.append(Chain(cid, [Node(x, y, i, r, cid) for i, (x, y, r) in enumerate(border_nodes)],
                            nr, BORDER))
    cid = len(chains)
    chains.append(Chain(cid, [Node(float(cx), float(cy), i, 0.0, cid) for i in range(nr)], nr, CENTER))
    nodes = [n for ch in chains for n in ch.nodes]
    return chains, nodes


class RayIndex:
    """Per-ray list of (radius, chain) sorted by radius."""

    def __init__(self, nr: int, chains=()):
        self.nr = nr
        self.radii = [[] for _ in range(nr)]
        self.owners = [[] for _ in range(nr)]
        for ch in chains:
            self.add_chain(ch)

    def add(self, ray: int, radius: float, chain) -> None:
        rl = self.radii[ray]
        i = bisect_left(rl, radius)
        rl.insert(i, radius)
        self.owners[ray].insert(i, chain)

    def add_chain(self, chain, nodes=None) -> None:
        for n in (chain.nodes if nodes is None else nodes):
            self.add(n.ray, n.radius, chain)

    def position(self, ray: int, chain, radius: float) -> int:
        rl = self.radii[ray]
        ow = self.owners[ray]
        i = bisect_left(rl, radius)
        # equal radii may belong to several chains
        j = i
        while j < len(rl) and rl[j] == radius:
            if ow[j] is chain:
                return j
            j += 1
        for j in range(len(ow)):
            if ow[j] is chain:
                return j
        raise KeyError(f"chain {chain.id} has no node on ray {ray}")

    def reown(self, ray: int, radius: float, old, new) -> None:
        self.owners[ray][self.position(ray, old, radius)] = new

    def remove(self, ray: int, radius: float, chain) -> None:
        i = self.position(ray, chain, radius)
        del self.radii[ray][i]
        del self.owners[ray][i]

    def neighbour(self, ray: int, chain, radius: float, direction: str):
        """Chain met first when walking the ray from ``chain`` in ``direction``."""
        i = self.position(ray, chain, radius)
        j = i + 1 if direction == OUTWARD else i - 1
        if 0 <= j < len(self.owners[ray]):
            return self.owners[ray][j]
        return None

    def between(self, ray: int, lo: float, hi: float):
        rl = self.radii[ray]
        return self.owners[ray][bisect_left(rl, lo):bisect_left(rl, hi + 1e-12)]

    def chains_on_ray(self, ray: int):
        return self.owners[ray]


def visible_chains(chains, support: Chain, direction: str, index: RayIndex | None = None) -> list:
    """Chains with an endpoint that sees ``support`` along its ray.

    Walking the endpoint's ray toward the support, the support must be the
    first chain met.  Every node of a closed chain counts as an endpoint.  Ordered by decreasing size then id.
    """
    if index is None:
        index = RayIndex(support.nr, chains)
    found = []
    seen = set()
    for n in support.nodes:
        other = index.neighbour(n.ray, support, n.radius, direction)
        if other is None or other is support or id(other) in seen:
            continue
        if other.is_closed or n.ray == other.a.ray or n.ray == other.b.ray:
            seen.add(id(other))
            found.append(other)
    found.sort(key=lambda c: (-c.size, c.id))
    return found
