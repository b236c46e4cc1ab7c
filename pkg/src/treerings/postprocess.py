"""Close the chains left open by the connect stage, one region at a time.

A region is the band between two consecutive closed rings.  Inside it, chains
that overlap slightly are cut so the pieces can be joined, chains covering
most of the circle are completed by interpolating between the bounding rings,
and a set of disjoint chains covering more than half the circle is turned into
a ring as well.  Only closed, mutually non-crossing rings leave this stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain_connect import (A, B, SCHEDULE, ConnectParams, connectivity_goodness, gap_rays, make_nodes,
                            other_endpoint)
from .geometry import BORDER, CENTER, NORMAL, Chain, euclidean_distance

POST_PARAMS = ConnectParams(0.2, 3, 2.0, 45, True)
CLOSE_THRESHOLD = 0.75
INFORMATION_THRESHOLD = 180.0
FINAL_FILL = 0.9


@dataclass
class RegionContext:
    inward_ring: Chain
    outward_ring: Chain
    within_chains: list = field(default_factory=list)
    neighbourhood_size: float = 45.0


class _Disk:
    """Mutable chain list plus the geometry needed to build nodes."""

    def __init__(self, chains, cy, cx, nr):
        self.chains = list(chains)
        self.cy, self.cx, self.nr = cy, cx, nr
        self._next_id = max((c.id for c in self.chains), default=-1) + 1

    def new_chain(self, nodes, kind=NORMAL) -> Chain:
        ch = Chain(self._next_id, list(nodes), self.nr, kind)
        self._next_id += 1
        return ch

    def rings(self) -> list:
        closed = [c for c in self.chains if c.is_closed]
        return sorted(closed, key=lambda c: (float(c.radii().mean()), c.id))

    def regions(self, neighbourhood_size: float) -> list[RegionContext]:
        rings = self.rings()
        radii = [ring_profile(r) for r in rings]
        open_chains = [c for c in self.chains if c.kind == NORMAL and not c.is_closed]
        out = []
        taken = set()
        for k in range(len(rings) - 1):
            inner, outer = radii[k], radii[k + 1]
            region = RegionContext(rings[k], rings[k + 1], [], neighbourhood_size)
            for c in open_chains:
                if id(c) in taken:
                    continue
                rays = np.array(c.rays)
                r = c.radii()
                if np.all(r > inner[rays]) and np.all(r < outer[rays]):
                    region.within_chains.append(c)
                    taken.add(id(c))
            out.append(region)
        return out

    def replace(self, old, new_chains) -> None:
        i = next(k for k, c in enumerate(self.chains) if c is old)
        self.chains[i:i + 1] = list(new_chains)

    def remove(self, ch) -> None:
        self.chains = [c for c in self.chains if c is not ch]


def ring_profile(ring: Chain) -> np.ndarray:
    """Radius per ray index of a closed chain."""
    out = np.empty(ring.nr)
    out[ring.rays] = ring.radii()
    return out


def angular_overlap(ch_j: Chain, ch_k: Chain) -> float:
    return len(ch_j.ray_set & ch_k.ray_set) * 360.0 / ch_j.nr


def select_support_chain(outward_ring: Chain, inward_ring: Chain, node) -> Chain:
    """Bounding ring nearest to ``node`` along its ray."""
    n_out = outward_ring.node_at(node.ray)
    n_in = inward_ring.node_at(node.ray)
    d_out = euclidean_distance((node.x, node.y), (n_out.x, n_out.y))
    d_in = euclidean_distance((node.x, node.y), (n_in.x, n_in.y))
    return inward_ring if d_in < d_out else outward_ring


def gap_piece(chain: Chain, ch_j: Chain, endpoint: str):
    """Nodes of ``chain`` that fall in the angular gap of ``ch_j``, nearest run to ``endpoint``.

    Walks from the ray next to the endpoint away from ``ch_j`` and keeps the
    first contiguous run of ``chain`` nodes found before re-entering ``ch_j``.
    Returns ``(nodes, offset)`` with ``offset`` the step count from the
    endpoint to the run, or ``(None, None)``.
    """
    nr = ch_j.nr
    e = ch_j.endpoint(endpoint)
    step = 1 if endpoint == A else -1
    own = ch_j.ray_set
    run = []
    offset = None
    for s in range(1, nr):
        ray = (e.ray + step * s) % nr
        if ray in own:
            break
        n = chain.node_at(ray)
        if n is None:
            if run:
                break
            continue
        if offset is None:
            offset = s
        run.append(n)
    if not run:
        return None, None
    return run, offset


def split_intersecting_chains(direction: int, chains_to_split, ch_j: Chain, endpoint: str = A, disk=None):
    """Cut each chain at ray ``direction`` and keep the piece that avoids ``ch_j``.

    A piece that still reaches the other endpoint of ``ch_j`` is cut again
    there.  Chains without a node on ``direction`` are left out.
    """
    out = []
    for inter in chains_to_split:
        if inter.node_at(direction) is None:
            continue
        nodes, _ = gap_piece(inter, ch_j, endpoint)
        if not nodes:
            continue
        piece = disk.new_chain(nodes) if disk is not None else Chain(-1, list(nodes), ch_j.nr, NORMAL)
        out.append((piece, inter))
    return out


def split_and_connect_neighbouring_chains(region: RegionContext, ch_j: Chain, endpoint: str, disk: _Disk,
                                          params: ConnectParams = POST_PARAMS, aux_chain=None):
    """Best candidate for ``endpoint`` of ``ch_j`` among whole chains and split pieces.

    Returns ``(piece, radial_diff, support, source)`` where ``source`` is the
    chain the piece was cut from, or a tuple of ``None``.
    """
    nb = region.neighbourhood_size
    e = ch_j.endpoint(endpoint)
    support = select_support_chain(region.outward_ring, region.inward_ring, e)
    others = [c for c in region.within_chains if c is not ch_j]
    on_ray = [c for c in others if c.node_at(e.ray) is not None and angular_overlap(ch_j, c) <= nb]
    candidates = split_intersecting_chains(e.ray, on_ray, ch_j, endpoint, disk)
    step = 360.0 / ch_j.nr
    for c in others:
        if c.node_at(e.ray) is not None:
            continue
        overlap = angular_overlap(ch_j, c)
        if overlap > nb:
            continue
        nodes, offset = gap_piece(c, ch_j, endpoint)
        if not nodes or offset * step > nb:
            continue
        if overlap == 0 and len(nodes) == c.size:
            candidates.append((c, c))
        else:
            candidates.append((disk.new_chain(nodes), c))

    best = None
    for piece, source in candidates:
        if piece.size < 1:
            continue
        ok, _ = connectivity_goodness(ch_j, piece, support, endpoint, params, ch_j.nr)
        if not ok:
            continue
        k_end = piece.endpoint(other_endpoint(endpoint))
        dist = euclidean_distance((e.x, e.y), (k_end.x, k_end.y))
        diff = abs(e.radius - k_end.radius)
        key = (dist, diff, piece.id)
        if best is None or key < best[0]:
            best = (key, piece, diff, source)
    if best is None:
        return None, None, None, None
    return best[1], best[2], support, best[3]


def two_ring_radii(inward_ring: Chain, outward_ring: Chain, ch: Chain, endpoint: str, other: Chain):
    """Radii over the gap from ``ch``'s endpoint to ``other``, at interpolated fractional depth."""
    rays = gap_rays(ch, other, endpoint)
    if not rays:
        return rays, np.empty(0)
    inner, outer = ring_profile(inward_ring), ring_profile(outward_ring)

    def frac(node):
        span = outer[node.ray] - inner[node.ray]
        return (node.radius - inner[node.ray]) / span if span > 0 else 0.5

    f_j = frac(ch.endpoint(endpoint))
    f_k = frac(other.endpoint(other_endpoint(endpoint)))
    t = np.arange(1, len(rays) + 1) / (len(rays) + 1)
    f = f_j + (f_k - f_j) * t
    idx = np.array(rays)
    return rays, inner[idx] + f * (outer[idx] - inner[idx])


def complete_chain_using_2_support_ring(inward_ring: Chain, outward_ring: Chain, ch: Chain, disk: _Disk) -> None:
    rays, radii = two_ring_radii(inward_ring, outward_ring, ch, A, ch)
    ch.set_nodes(ch.nodes + make_nodes(rays, radii, disk.cy, disk.cx, disk.nr, ch.id))


def join(ch_j: Chain, piece: Chain, endpoint: str, support: Chain, region: RegionContext, disk: _Disk) -> None:
    rays, radii = two_ring_radii(region.inward_ring, region.outward_ring, ch_j, endpoint, piece)
    new = make_nodes(rays, radii, disk.cy, disk.cx, disk.nr, ch_j.id)
    ch_j.set_nodes(ch_j.nodes + new + list(piece.nodes))


def connect_radially_closest_chain(ch_j, found_a, found_b, region: RegionContext, disk: _Disk) -> bool:
    options = []
    for found, endpoint in ((found_a, A), (found_b, B)):
        piece, diff, support, source = found
        if piece is not None and ch_j.size + piece.size <= disk.nr:
            options.append((diff, 0 if endpoint == A else 1, piece, support, source, endpoint))
    if not options:
        return False
    options.sort(key=lambda t: (t[0], t[1]))
    _, _, piece, support, source, endpoint = options[0]
    join(ch_j, piece, endpoint, support, region, disk)
    taken = {n.ray for n in piece.nodes}
    rest = [n for n in source.nodes if n.ray not in taken]
    region.within_chains = [c for c in region.within_chains if c is not source]
    leftovers = [disk.new_chain(run) for run in _contiguous_runs(rest, disk.nr)] if rest else []
    region.within_chains.extend(leftovers)
    disk.replace(source, leftovers)
    return True


def _contiguous_runs(nodes, nr):
    if not nodes:
        return []
    by_ray = {n.ray: n for n in nodes}
    rays = sorted(by_ray)
    runs = [[rays[0]]]
    for r in rays[1:]:
        if r == runs[-1][-1] + 1:
            runs[-1].append(r)
        else:
            runs.append([r])
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == nr - 1:
        runs[0] = runs.pop() + runs[0]
    return [[by_ray[r] for r in run] for run in runs]


def split_and_connect_chains(region: RegionContext, disk: _Disk, params: ConnectParams = POST_PARAMS) -> bool:
    """Grow chains in the region largest-first; returns True once one is closed."""
    treated = set()
    ch_j = None
    connected = False
    while True:
        if not connected:
            if ch_j is not None and ch_j.covers(CLOSE_THRESHOLD):
                complete_chain_using_2_support_ring(region.inward_ring, region.outward_ring, ch_j, disk)
                return True
            pending = [c for c in region.within_chains if id(c) not in treated]
            if not pending:
                return False
            ch_j = max(pending, key=lambda c: (c.size, -c.id))
            treated.add(id(ch_j))
        if ch_j.is_closed:
            return True
        found_a = split_and_connect_neighbouring_chains(region, ch_j, A, disk, params)
        found_b = split_and_connect_neighbouring_chains(region, ch_j, B, disk, params, aux_chain=found_a[0])
        connected = connect_radially_closest_chain(ch_j, found_a, found_b, region, disk)


def connect_chains_if_there_is_enough_data(region: RegionContext, disk: _Disk,
                                           params: ConnectParams = SCHEDULE[-1]) -> bool:
    """Build a ring from disjoint chains once they jointly cover more than half the circle."""
    chosen = []
    for c in sorted(region.within_chains, key=lambda c: (-c.size, c.id)):
        if all(angular_overlap(c, o) == 0 for o in chosen):
            chosen.append(c)
    step = 360.0 / disk.nr
    if sum(c.size for c in chosen) * step <= INFORMATION_THRESHOLD:
        return False
    seed = chosen[0]
    ring = disk.new_chain(seed.nodes)
    used = [seed]
    rest = sorted(chosen[1:], key=lambda c: (c.b.ray - seed.a.ray) % disk.nr)
    for c in rest:
        support = select_support_chain(region.outward_ring, region.inward_ring, ring.a)
        ok, _ = connectivity_goodness(ring, c, support, A, params, disk.nr)
        if ok:
            join(ring, c, A, support, region, disk)
            used.append(c)
    if ring.size * step <= INFORMATION_THRESHOLD:
        return False
    complete_chain_using_2_support_ring(region.inward_ring, region.outward_ring, ring, disk)
    for c in used:
        disk.remove(c)
        region.within_chains.remove(c)
    disk.chains.append(ring)
    return True


def complete_chains_if_required(disk: _Disk) -> None:
    """Last pass: nearly closed chains lying between two rings are closed."""
    for region in disk.regions(POST_PARAMS.neighbourhood_size):
        for c in list(region.within_chains):
            if c.covers(FINAL_FILL):
                complete_chain_using_2_support_ring(region.inward_ring, region.outward_ring, c, disk)


def crossing(r1: np.ndarray, r2: np.ndarray) -> bool:
    d = r1 - r2
    return not (np.all(d > 0) or np.all(d < 0))


def non_crossing_rings(rings) -> list:
    """Drop rings that cross a better-supported one (more detected nodes first)."""
    ranked = sorted(rings, key=lambda c: (-sum(not n.interpolated for n in c.nodes), c.id))
    kept, profiles = [], []
    for ring in ranked:
        p = ring_profile(ring)
        if any(crossing(p, q) for q in profiles):
            continue
        kept.append(ring)
        profiles.append(p)
    return sorted(kept, key=lambda c: float(c.radii().mean()))


def postprocess(chains, nodes, cy: float, cx: float, nr: int, params: ConnectParams = POST_PARAMS,
                keep_open: bool = False):
    """Return the closed normal rings sorted from the pith outward.

    With ``keep_open`` the full chain list (center, border and open chains
    included) is returned instead, which is useful for inspection.
    """
    disk = _Disk(chains, cy, cx, nr)
    budget = max(len(disk.chains), 1) ** 2
    idx_start = 0
    for _ in range(budget):
        regions = disk.regions(params.neighbourhood_size)
        completed = False
        for k in range(min(idx_start, len(regions)), len(regions)):
            region = regions[k]
            if split_and_connect_chains(region, disk, params):
                completed = True
            elif connect_chains_if_there_is_enough_data(region, disk):
                completed = True
            if completed:
                idx_start = k
                break
        if not completed:
            break
    complete_chains_if_required(disk)
    if keep_open:
        return disk.chains
    rings = [c for c in disk.chains if c.kind == NORMAL and c.is_closed]
    bounds = [c for c in disk.chains if c.kind in (CENTER, BORDER)]
    rings = non_crossing_rings(rings)
    border = next((c for c in bounds if c.kind == BORDER), None)
    if border is not None:
        bp = ring_profile(border)
        rings = [r for r in rings if not crossing(bp, ring_profile(r))]
    for i, r in enumerate(rings):
        r.id = i
        r.set_nodes(r.reowned(i))
    return rings
