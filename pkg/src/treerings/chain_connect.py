"""Merge chains into rings, guided by support chains and a goodness test.

A support chain ``Ch_i`` is taken largest-first; the chains whose endpoints see
it along their rays (inward and outward) are candidates, and pairs of
candidates are joined when the gap between them is short and both sides keep
a consistent radial distance to the support.  Joining fills every ray of the
gap with interpolated nodes.  The whole loop runs nine times with
progressively looser parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import NORMAL, Chain, Node, euclidean_distance
from .sampling import INWARD, OUTWARD, RayIndex, visible_chains

N_NODES = 20
FILL_THRESHOLD = 0.9
A, B = "A", "B"


@dataclass(frozen=True)
class ConnectParams:
    th_radial_tolerance: float
    th_distribution_size: float
    th_regular_derivative: float
    neighbourhood_size: float
    derivative_from_center: bool


SCHEDULE = (
    ConnectParams(0.1, 2, 1.5, 10, False),
    ConnectParams(0.2, 2, 1.5, 10, False),
    ConnectParams(0.1, 3, 1.5, 22, False),
    ConnectParams(0.2, 3, 1.5, 22, False),
    ConnectParams(0.1, 3, 1.5, 45, False),
    ConnectParams(0.2, 3, 1.5, 45, False),
    ConnectParams(0.1, 2, 2.0, 22, True),
    ConnectParams(0.2, 3, 2.0, 45, True),
    ConnectParams(0.2, 3, 2.0, 45, True),
)


def compute_intersection_matrix(chains, nodes=None, nr: int | None = None) -> np.ndarray:
    """Boolean matrix, true where two chains have nodes on a common ray.

    Indexed by position in ``chains``; ``nodes`` is accepted for symmetry with
    the other stages but the chains already carry their nodes.
    """
    if nr is None:
        nr = chains[0].nr if chains else 0
    inc = np.zeros((len(chains), nr), np.float32)
    for i, ch in enumerate(chains):
        inc[i, ch.rays] = 1.0
    m = (inc @ inc.T) > 0
    np.fill_diagonal(m, True)
    return m


def other_endpoint(endpoint: str) -> str:
    return B if endpoint == A else A


def gap_rays(ch_j: Chain, ch_k: Chain, endpoint: str) -> list[int]:
    """Rays strictly between the joined endpoints, ordered from ``ch_j`` outward."""
    nr = ch_j.nr
    if endpoint == A:
        start, stop = ch_j.a.ray, ch_k.b.ray
        steps = (stop - start) % nr
        return [(start + s) % nr for s in range(1, steps)]
    start, stop = ch_j.b.ray, ch_k.a.ray
    steps = (start - stop) % nr
    return [(start - s) % nr for s in range(1, steps)]


def support_radius(support: Chain, ray: int) -> float:
    """Radius of the support on ``ray``, or of its angularly nearest node."""
    n = support.node_at(ray)
    if n is not None:
        return n.radius
    nr = support.nr
    da = (ray - support.a.ray) % nr
    db = (support.b.ray - ray) % nr
    return support.a.radius if da < db else support.b.radius


def radial_gaps(window, support: Chain) -> np.ndarray:
    return np.array([abs(n.radius - support_radius(support, n.ray)) for n in window])


def interpolate_radii(ch_j: Chain, ch_k: Chain, endpoint: str, support: Chain | None,
                      from_center: bool) -> tuple[list[int], np.ndarray]:
    """Radii for the gap rays between the endpoints, linear in angle.

    With ``from_center`` the radius itself is interpolated; otherwise the signed
    offset to the support is, and the new nodes follow the support's shape.
    """
    rays = gap_rays(ch_j, ch_k, endpoint)
    if not rays:
        return rays, np.empty(0)
    e_j = ch_j.endpoint(endpoint)
    e_k = ch_k.endpoint(other_endpoint(endpoint))
    t = np.arange(1, len(rays) + 1) / (len(rays) + 1)
    if from_center or support is None:
        return rays, e_j.radius + (e_k.radius - e_j.radius) * t
    d_j = e_j.radius - support_radius(support, e_j.ray)
    d_k = e_k.radius - support_radius(support, e_k.ray)
    base = np.array([support_radius(support, r) for r in rays])
    return rays, np.maximum(base + d_j + (d_k - d_j) * t, 0.0)


def make_nodes(rays, radii, cy: float, cx: float, nr: int, chain_id: int) -> list[Node]:
    out = []
    for ray, r in zip(rays, radii):
        theta = 2 * math.pi * ray / nr
        out.append(Node(cx + r * math.cos(theta), cy + r * math.sin(theta), ray, float(r),
                        chain_id, True))
    return out


def similar_radial_distances(set_j, set_k, th_distribution_size: float) -> bool:
    mu_j, sd_j = float(np.mean(set_j)), float(np.std(set_j))
    mu_k, sd_k = float(np.mean(set_k)), float(np.std(set_k))
    lo = max(mu_j - th_distribution_size * sd_j, mu_k - th_distribution_size * sd_k)
    hi = min(mu_j + th_distribution_size * sd_j, mu_k + th_distribution_size * sd_k)
    return lo <= hi


def radial_tolerance(delta_j: float, delta_k: float, th: float) -> bool:
    return delta_j * (1 - th) <= delta_k <= delta_j * (1 + th)


def _derivatives(radii: np.ndarray) -> np.ndarray:
    if len(radii) < 2:
        return np.zeros(len(radii))
    return np.abs(np.gradient(radii))


def regular_derivative(ch_j: Chain, ch_k: Chain, interpolated: np.ndarray, th_regular_derivative: float,
                       endpoint: str = A) -> bool:
    """Largest slope over the gap must not exceed ``th`` times the largest slope nearby.

    ``interpolated`` holds the gap radii ordered from ``ch_j``; slopes are
    centred differences, one-sided at the window ends.
    """
    win_j = np.array([n.radius for n in ch_j.window(endpoint, N_NODES)])
    win_k = np.array([n.radius for n in ch_k.window(other_endpoint(endpoint), N_NODES)])
    existing = max(_derivatives(win_j).max(initial=0.0), _derivatives(win_k).max(initial=0.0))
    interpolated = np.asarray(interpolated, float)
    if len(interpolated) == 0:
        gap = abs(win_k[0] - win_j[0])
    else:
        seq = np.concatenate([win_j[:1], interpolated, win_k[:1]])
        gap = _derivatives(seq)[1:-1].max()
    return gap <= existing * th_regular_derivative


def check_endpoints(support: Chain, ch_j: Chain, candidate: Chain, endpoint: str) -> bool:
    """Both joined endpoints and the gap between them lie over the support."""
    if support.is_closed:
        return True
    rays = support.ray_set
    e_j = ch_j.endpoint(endpoint)
    e_k = candidate.endpoint(other_endpoint(endpoint))
    if e_j.ray not in rays or e_k.ray not in rays:
        return False
    return all(r in rays for r in gap_rays(ch_j, candidate, endpoint))


def connectivity_goodness(ch_j: Chain, candidate: Chain, support: Chain, endpoint: str,
                          params: ConnectParams, nr: int):
    """Size, endpoint, similarity and derivative tests.  Returns ``(ok, distance)``.

    ``distance`` compares the mean radial gap to the support on both sides of
    the junction and ranks candidates that pass.
    """
    if ch_j.size + candidate.size > nr:
        return False, math.inf
    if not check_endpoints(support, ch_j, candidate, endpoint):
        return False, math.inf
    set_j = radial_gaps(ch_j.window(endpoint, N_NODES), support)
    set_k = radial_gaps(candidate.window(other_endpoint(endpoint), N_NODES), support)
    distance = abs(float(set_j.mean()) - float(set_k.mean()))
    similar = similar_radial_distances(set_j, set_k, params.th_distribution_size)
    tol = radial_tolerance(set_j[0], set_k[0], params.th_radial_tolerance)
    if not (similar or tol):
        return False, distance
    _, radii = interpolate_radii(ch_j, candidate, endpoint, support, params.derivative_from_center)
    if not regular_derivative(ch_j, candidate, radii, params.th_regular_derivative, endpoint):
        return False, distance
    return True, distance


class SystemState:
    """Chains, per-ray node index and intersection matrix of one connect pass."""

    def __init__(self, chains, nodes, cy, cx, nr, params: ConnectParams, m=None):
        self.chains = list(chains)
        for i, ch in enumerate(self.chains):
            ch.id = i
        self.cy, self.cx, self.nr = cy, cx, nr
        self.params = params
        self.index = RayIndex(nr, self.chains)
        self.M = compute_intersection_matrix(self.chains, nr=nr) if m is None else m.copy()
        self.order = sorted(self.chains, key=lambda c: (-c.size, c.id))
        self.next_chain_index = 0
        self.size_l_chain_init = len(self.chains)
        self.merges = 0
        self.on_merge = None

    @property
    def nodes(self):
        return [n for ch in self.chains for n in ch.nodes]

    def continue_in_loop(self) -> bool:
        return self.next_chain_index < len(self.order)

    def get_next_chain(self) -> Chain:
        ch_i = self.order[self.next_chain_index]
        self.size_l_chain_init = len(self.chains)
        self.fill_chain_if_no_overlap(ch_i)
        return ch_i

    def update_system_status(self, ch_i: Chain, outward, inward) -> None:
        if len(self.chains) != self.size_l_chain_init:
            self.order.sort(key=lambda c: (-c.size, c.id))
            alive = [c for c in [ch_i] + list(outward) + list(inward) if c.id >= 0]
            alive.sort(key=lambda c: -c.size)
            longest = alive[0]
            if longest is ch_i:
                self.next_chain_index = self.order.index(ch_i) + 1
            else:
                self.next_chain_index = self.order.index(longest)
        else:
            self.next_chain_index = self.order.index(ch_i) + 1

    def non_intersecting(self, candidates, ch: Chain) -> list:
        row = self.M[ch.id]
        return [c for c in candidates if c is not ch and not row[c.id]]

    # goodness ------------------------------------------------------------

    def connectivity_goodness(self, ch_j: Chain, candidate: Chain, support: Chain, endpoint: str,
                              params: ConnectParams | None = None):
        return connectivity_goodness(ch_j, candidate, support, endpoint, params or self.params, self.nr)

    def chains_in_neighbourhood(self, ch_j: Chain, pool, endpoint: str, support: Chain):
        nb = self.params.neighbourhood_size
        step = 360.0 / self.nr
        out = []
        for c in pool:
            if c is support:
                continue
            if endpoint == A:
                d = (c.b.ray - ch_j.a.ray) % self.nr
            else:
                d = (ch_j.b.ray - c.a.ray) % self.nr
            if 0 < d * step <= nb:
                out.append((d, c.id, c))
        out.sort(key=lambda t: (t[0], t[1]))
        return [c for _, _, c in out]

    def get_closest_chain(self, ch_j: Chain, pool, support: Chain, endpoint: str):
        ranked = self.chains_in_neighbourhood(ch_j, pool, endpoint, support)
        for cand in ranked:
            ok, dist = self.connectivity_goodness(ch_j, cand, support, endpoint)
            if ok:
                return self.get_closest_by_radial_distance_no_intersect(
                    ch_j, endpoint, support, dist, cand, ranked)
        return None

    def get_closest_by_radial_distance_no_intersect(self, ch_j, endpoint, support, radial_distance,
                                                    candidate, neighbourhood):
        row = self.M[candidate.id]
        options = [(radial_distance, candidate.id, candidate)]
        for c in neighbourhood:
            if c is candidate or not row[c.id]:
                continue
            ok, dist = self.connectivity_goodness(ch_j, c, support, endpoint)
            if ok:
                options.append((dist, c.id, c))
        options.sort(key=lambda t: (t[0], t[1]))
        return options[0][2]

    def get_closest_chain_logic(self, candidates, ch_j: Chain, no_intersection, support: Chain,
                                location: str, endpoint: str):
        ch_k = self.get_closest_chain(ch_j, no_intersection, support, endpoint)
        if ch_k is None:
            return None
        pool_k = self.non_intersecting(candidates, ch_k)
        symmetric = self.get_closest_chain(ch_k, pool_k, support, other_endpoint(endpoint))
        if symmetric is not ch_j or ch_j.size + ch_k.size > self.nr:
            return None
        return ch_k

    # merging -------------------------------------------------------------

    def exist_chain_overlapping(self, rays, radii, ch_j: Chain, ch_k: Chain, support: Chain,
                                th: float | None = None) -> bool:
        """Another chain has a node inside the band around the interpolated path."""
        th = self.params.th_radial_tolerance if th is None else th
        skip = (ch_j, ch_k, support)
        for ray, r in zip(rays, radii):
            half = th * abs(r - support_radius(support, ray))
            for owner in self.index.between(ray, r - half, r + half):
                if not any(owner is s for s in skip):
                    return True
        return False

    def connect_two_chains(self, ch_j: Chain, ch_k: Chain, candidates, endpoint: str, support: Chain) -> bool:
        if endpoint is None or ch_k is None or ch_k is support:
            return False
        rays, radii = interpolate_radii(ch_j, ch_k, endpoint, support, self.params.derivative_from_center)
        if self.exist_chain_overlapping(rays, radii, ch_j, ch_k, support):
            return False
        self.merge(ch_j, ch_k, rays, radii)
        if ch_k in candidates:
            candidates.remove(ch_k)
        return True

    def merge(self, ch_j: Chain, ch_k: Chain, rays, radii) -> None:
        new_nodes = make_nodes(rays, radii, self.cy, self.cx, self.nr, ch_j.id)
        for n in ch_k.nodes:
            self.index.reown(n.ray, n.radius, ch_k, ch_j)
        self.index.add_chain(ch_j, new_nodes)
        ch_j.set_nodes(ch_j.nodes + new_nodes + ch_k.nodes)
        j, k = ch_j.id, ch_k.id
        row = self.M[j] | self.M[k]
        for ray in rays:
            for owner in self.index.chains_on_ray(ray):
                row[owner.id] = True
        self.M[j, :] = row
        self.M[:, j] = row
        self.delete_chain(ch_k)
        self.merges += 1
        if self.on_merge is not None:
            self.on_merge(self)

    def delete_chain(self, ch: Chain) -> None:
        k = ch.id
        self.M = np.delete(np.delete(self.M, k, axis=0), k, axis=1)
        del self.chains[k]
        for c in self.chains[k:]:
            c.id -= 1
        self.order.remove(ch)
        ch.id = -1

    def add_nodes_to_chain(self, chain: Chain, rays, radii) -> None:
        new_nodes = make_nodes(rays, radii, self.cy, self.cx, self.nr, chain.id)
        self.index.add_chain(chain, new_nodes)
        chain.set_nodes(chain.nodes + new_nodes)
        for ray in rays:
            for owner in self.index.chains_on_ray(ray):
                self.M[chain.id, owner.id] = True
                self.M[owner.id, chain.id] = True

    def closing_support(self, chain: Chain) -> Chain:
        """Nearest chain inward of endpoint A (the center chain at worst)."""
        a = chain.a
        inner = self.index.neighbour(a.ray, chain, a.radius, INWARD)
        if inner is None:
            inner = next(c for c in self.chains if c.kind == "center")
        return inner

    def fill_chain_if_no_overlap(self, chain: Chain) -> bool:
        if chain.kind != NORMAL or not (FILL_THRESHOLD * self.nr <= chain.size < self.nr):
            return False
        support = self.closing_support(chain)
        rays, radii = interpolate_radii(chain, chain, A, support, self.params.derivative_from_center)
        if self.exist_chain_overlapping(rays, radii, chain, chain, support):
            return False
        self.add_nodes_to_chain(chain, rays, radii)
        return True

    def complete_chains(self) -> None:
        for ch in list(self.chains):
            self.fill_chain_if_no_overlap(ch)


def select_closest_one(ch_j: Chain, ch_k_a, ch_k_b):
    """Pick the candidate whose joining endpoint is nearer in the image."""
    options = []
    if ch_k_b is not None:
        options.append((euclidean_distance((ch_j.b.x, ch_j.b.y), (ch_k_b.a.x, ch_k_b.a.y)), 0, ch_k_b, B))
    if ch_k_a is not None:
        options.append((euclidean_distance((ch_j.a.x, ch_j.a.y), (ch_k_a.b.x, ch_k_a.b.y)), 1, ch_k_a, A))
    if not options:
        return None, None
    options.sort(key=lambda t: (t[0], t[1]))
    return options[0][2], options[0][3]


def connect_candidates(visible) -> list:
    return [c for c in visible if c.kind == NORMAL and not c.is_closed]


def connect_chains_main_logic(state: SystemState):
    while state.continue_in_loop():
        ch_i = state.get_next_chain()
        outward = connect_candidates(visible_chains(state.chains, ch_i, OUTWARD, state.index))
        inward = connect_candidates(visible_chains(state.chains, ch_i, INWARD, state.index))
        for candidates, location in ((outward, OUTWARD), (inward, INWARD)):
            pointer = 0
            while pointer < len(candidates):
                ch_j = candidates[pointer]
                no_inter = state.non_intersecting(candidates, ch_j)
                ch_k_b = state.get_closest_chain_logic(candidates, ch_j, no_inter, ch_i, location, B)
                ch_k_a = state.get_closest_chain_logic(candidates, ch_j, no_inter, ch_i, location, A)
                ch_k, endpoint = select_closest_one(ch_j, ch_k_a, ch_k_b)
                merged = state.connect_two_chains(ch_j, ch_k, candidates, endpoint, ch_i)
                pointer = candidates.index(ch_j) + (0 if merged else 1)
        state.update_system_status(ch_i, outward, inward)
    state.complete_chains()
    return state.chains, state.nodes, state.M


def finalize(chains) -> list[Node]:
    """Renumber chains by position and stamp the ids on their nodes."""
    nodes = []
    for i, ch in enumerate(chains):
        ch.id = i
        ch.set_nodes(ch.reowned(i))
        nodes.extend(ch.nodes)
    return nodes


def connect_chains(chains, nodes, cy: float, cx: float, nr: int, schedule=SCHEDULE, trace=None):
    """Run the nine connect passes.  ``trace`` receives (pass, chain count) after each."""
    chains = list(chains)
    m = compute_intersection_matrix(chains, nr=nr)
    for i, params in enumerate(schedule):
        state = SystemState(chains, None, cy, cx, nr, params, m)
        chains, _, m = connect_chains_main_logic(state)
        if trace is not None:
            trace(i, len(chains))
    nodes = finalize(chains)
    return chains, nodes
