import itertools

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from treerings.chain_connect import (A, N_NODES, SCHEDULE, ConnectParams, SystemState, check_endpoints,
                                     compute_intersection_matrix, connect_chains, connect_chains_main_logic,
                                     connectivity_goodness,
                                     interpolate_radii, radial_tolerance, regular_derivative,
                                     similar_radial_distances)
from treerings.geometry import NORMAL, Chain
from treerings.sampling import OUTWARD

from conftest import PITH, arc, center_chain, wrap

CY, CX = PITH
P1 = SCHEDULE[0]
P_CENTER = ConnectParams(0.2, 3, 2.0, 45, True)


def matrix_oracle(chains):
    n = len(chains)
    m = np.zeros((n, n), bool)
    for i, j in itertools.product(range(n), repeat=2):
        m[i, j] = i == j or bool(chains[i].ray_set & chains[j].ray_set)
    return m


def test_schedule_columns():
    assert len(SCHEDULE) == 9
    assert SCHEDULE[0] == ConnectParams(0.1, 2, 1.5, 10, False)
    assert SCHEDULE[8] == ConnectParams(0.2, 3, 2.0, 45, True)
    assert N_NODES == 20


def test_intersection_matrix_examples():
    c0, c1, c2 = arc(range(0, 11), 10, 0), arc(range(5, 16), 20, 1), arc(range(100, 120), 30, 2)
    m = compute_intersection_matrix([c0, c1, c2])
    assert m[0, 1] and m[1, 0]
    assert not m[0, 2] and not m[2, 1]
    assert m.diagonal().all()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 35), st.integers(1, 36)), min_size=1, max_size=12))
def test_intersection_matrix_matches_set_oracle(spans):
    chains = [arc(wrap(a, (a + n - 1) % 36, 36), 10 + i, i, nr=36) for i, (a, n) in enumerate(spans)]
    m = compute_intersection_matrix(chains)
    assert np.array_equal(m, matrix_oracle(chains))
    assert np.array_equal(m, m.T)


def test_similar_radial_distances_examples():
    assert similar_radial_distances([5, 6, 7], [5, 6, 7], 2)
    # mu 10 sd 1 vs mu 20 sd 1 at th 3: [7, 13] and [17, 23]
    assert not similar_radial_distances([9, 11], [19, 21], 3)
    # mu 10 sd 2 vs mu 15 sd 0.5: [4, 16] and [13.5, 16.5]
    assert similar_radial_distances([8, 12], [14.5, 15.5], 3)


def test_radial_tolerance_examples():
    assert radial_tolerance(10, 10.5, 0.1)
    assert radial_tolerance(10, 9, 0.1) and radial_tolerance(10, 11, 0.1)
    assert not radial_tolerance(10, 11.5, 0.1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=20), st.lists(st.floats(0, 100), min_size=1, max_size=20),
       st.floats(0.5, 4))
def test_similar_radial_distances_is_interval_overlap(a, b, th):
    ma, sa, mb, sb = np.mean(a), np.std(a), np.mean(b), np.std(b)
    expected = max(ma - th * sa, mb - th * sb) <= min(ma + th * sa, mb + th * sb)
    assert similar_radial_distances(a, b, th) == expected
    assert similar_radial_distances(a, b, th) == similar_radial_distances(b, a, th)


def test_regular_derivative_flat():
    j, k = arc(range(0, 30), 50, 0), arc(range(33, 60), 50, 1)
    assert regular_derivative(j, k, np.full(3, 50.0), 1.5, A)


def test_regular_derivative_rejects_jump():
    # existing slope 1, interpolated path jumps by 50
    j = arc(range(0, 30), lambda r: 20.0 + r)
    k = arc(range(32, 60), 50, 1)
    assert not regular_derivative(j, k, np.array([100.0, 100.0]), 1.5, A)
    assert regular_derivative(j, k, np.array([49.5, 50.0]), 1.5, A)


def test_regular_derivative_continued_ramp():
    ramp = lambda r: 40 + 0.5 * r
    j, k = arc(range(0, 30), ramp, 0), arc(range(33, 60), ramp, 1)
    interp = np.array([ramp(30), ramp(31), ramp(32)])
    assert regular_derivative(j, k, interp, 1.5, A)


def test_interpolation_linear_and_constant():
    j, k = arc(range(0, 10), 100, 0), arc(range(13, 20), 100, 1)
    rays, radii = interpolate_radii(j, k, A, None, True)
    assert rays == [10, 11, 12] and np.allclose(radii, 100)
    j2 = arc(range(0, 10), 100, 0)
    k2 = arc(range(12, 20), 106, 1)
    rays, radii = interpolate_radii(j2, k2, A, None, True)
    assert rays == [10, 11]
    # radius 100 at ray 9 and 106 at ray 12
    assert np.allclose(radii, [102, 104])


def test_interpolation_adjacent_is_empty_and_across_seam():
    j, k = arc(range(0, 10), 50, 0), arc(range(10, 20), 50, 1)
    rays, radii = interpolate_radii(j, k, A, None, True)
    assert rays == [] and len(radii) == 0
    j, k = arc(wrap(300, 357), 50, 0), arc(range(2, 40), 60, 1)
    rays, radii = interpolate_radii(j, k, A, None, True)
    assert rays == [358, 359, 0, 1]
    assert np.allclose(radii, [52, 54, 56, 58])


def test_interpolation_follows_support_offset():
    support = arc(range(360), lambda r: 40 + 0.1 * r, 5)
    j, k = arc(range(0, 10), lambda r: 60 + 0.1 * r, 0), arc(range(14, 30), lambda r: 60 + 0.1 * r, 1)
    rays, radii = interpolate_radii(j, k, A, support, False)
    assert np.allclose(radii, [60 + 0.1 * r for r in rays])


def test_check_endpoints():
    support = arc(range(0, 100), 20, 9)
    j, k = arc(range(10, 30), 40, 0), arc(range(40, 60), 40, 1)
    assert check_endpoints(support, j, k, A)
    k_out = arc(range(110, 130), 40, 1)
    assert not check_endpoints(support, j, k_out, A)
    j_edge, k_edge = arc(range(80, 99), 40, 0), arc(range(105, 120), 40, 1)
    assert not check_endpoints(support, j_edge, k_edge, A)
    assert check_endpoints(center_chain(9), j, k_out, A)


def test_goodness_two_arcs_on_circle():
    c = center_chain(9)
    j, k = arc(range(0, 170), 50, 0), arc(range(180, 350), 50, 1)
    ok, dist = connectivity_goodness(j, k, c, A, P1, 360)
    assert ok and dist == 0


def test_goodness_size_condition():
    c = center_chain(9)
    big_j = Chain(0, list(arc(range(0, 200), 50, 0).nodes), 360)
    big_k = arc(range(200, 361), 50, 1)
    assert big_j.size + big_k.size == 360 + 1
    ok, _ = connectivity_goodness(big_j, big_k, c, A, P1, 360)
    assert not ok


def test_goodness_rejects_radially_distant_arc():
    c = center_chain(9)
    j, k = arc(range(0, 40), 50, 0), arc(range(45, 80), 70, 1)
    ok, _ = connectivity_goodness(j, k, c, A, P1, 360)
    assert not ok


def state_for(chains, params=P_CENTER):
    return SystemState(chains, None, CY, CX, 360, params)


def test_two_half_arcs_close_into_ring():
    chains = [arc(range(2, 178), 50, 0), arc(range(182, 358), 50, 1), center_chain(2)]
    out, nodes = connect_chains(chains, None, CY, CX, 360)
    normal = [c for c in out if c.kind == NORMAL]
    assert len(normal) == 1 and normal[0].is_closed
    assert np.allclose(normal[0].radii(), 50)
    assert all(n.chain_id == normal[0].id for n in normal[0].nodes)


def test_closed_input_is_fixpoint():
    chains = [arc(range(360), 30, 0), arc(range(360), 60, 1), center_chain(2)]
    before = [c.radii().copy() for c in chains]
    out, _ = connect_chains(chains, None, CY, CX, 360)
    assert len(out) == 3
    for c, r in zip(out, before):
        assert np.array_equal(c.radii(), r)


def test_intersecting_candidate_never_merged():
    # k overlaps j on every ray of j, so M forbids the pair
    j, k = arc(range(10, 40), 50, 0), arc(range(5, 60), 52, 1)
    out, _ = connect_chains([j, k, center_chain(2)], None, CY, CX, 360)
    assert sorted(c.size for c in out if c.kind == NORMAL) == [30, 55]


def test_fill_threshold():
    s = state_for([arc(range(0, 342), 50, 0), center_chain(1)])
    assert s.fill_chain_if_no_overlap(s.chains[0])
    assert s.chains[0].is_closed
    s = state_for([arc(range(0, 288), 50, 0), center_chain(1)])
    assert not s.fill_chain_if_no_overlap(s.chains[0])
    assert s.chains[0].size == 288


def test_fill_blocked_by_overlap():
    s = state_for([arc(range(0, 342), 50, 0), arc(range(345, 355), 50.5, 1), center_chain(2)])
    assert not s.fill_chain_if_no_overlap(s.chains[0])
    assert s.chains[0].size == 342


def test_overlap_band():
    support = center_chain(3)
    j, k = arc(range(0, 30), 50, 0), arc(range(40, 70), 50, 1)
    between = arc(range(33, 37), 52, 2)
    s = state_for([j, k, between, support])
    rays, radii = interpolate_radii(j, k, A, support, True)
    assert s.exist_chain_overlapping(rays, radii, j, k, support, 0.1)
    far = arc(range(33, 37), 80, 2)
    s = state_for([j, k, far, support])
    assert not s.exist_chain_overlapping(rays, radii, j, k, support, 0.1)
    s = state_for([j, arc(range(30, 60), 50, 1), support])
    assert not s.exist_chain_overlapping([], np.empty(0), j, s.chains[1], support, 0.1)


def test_symmetric_check_rejects_third_chain():
    # j's closest on A is k, but k's closest on B is m (nearer than j)
    support = center_chain(3)
    j = arc(range(0, 30), 50, 0)
    m = arc(range(30, 40), 50, 1)
    k = arc(range(42, 80), 50, 2)
    s = state_for([j, m, k, support])
    cands = [j, m, k]
    got = s.get_closest_chain_logic(cands, j, [k], support, OUTWARD, A)
    assert got is None
    got = s.get_closest_chain_logic(cands, m, [k], support, OUTWARD, A)
    assert got is k


def test_symmetric_size_guard():
    support = center_chain(2)
    j = arc(range(0, 200), 50, 0)
    k = arc(range(203, 368), 50, 1)
    assert j.size + k.size == 365
    s = state_for([j, k, support])
    assert s.get_closest_chain_logic([j, k], j, [k], support, OUTWARD, A) is None


def test_radially_closest_wins_and_tie_by_id():
    support = center_chain(4)
    j = arc(range(0, 40), 50, 0)
    noisy = arc(range(42, 60), 53, 1)
    right = arc(range(44, 80), 50, 2)
    s = state_for([j, noisy, right, support])
    best = s.get_closest_by_radial_distance_no_intersect(j, A, support, 3.0, noisy, [noisy, right])
    assert best is right
    twin = arc(range(44, 80), 50, 3)
    s = state_for([j, right, twin, support])
    s.M[1, 2] = s.M[2, 1] = True
    best = s.get_closest_by_radial_distance_no_intersect(j, A, support, 0.0, twin, [right, twin])
    assert best is right


def random_instance(seed, n_rings=3):
    """Out-of-round rings broken into noisy arcs with short gaps, plus the center chain."""
    rng = np.random.default_rng(seed)
    chains = []
    phase = rng.uniform(0, 2 * np.pi)
    for r in range(n_rings):
        base = 30 + 25 * r
        shape = lambda ray: base * (1 + 0.05 * np.sin(np.radians(2 * ray) + phase))
        start = int(rng.integers(0, 360))
        pos = start
        while pos < start + 340 and len(chains) < 28:
            n = int(rng.integers(15, 80))
            rays = [(pos + i) % 360 for i in range(n)]
            if pos + n >= start + 355:
                break
            chains.append(arc(rays, [shape(ray) + rng.normal(0, 0.15) for ray in rays], len(chains)))
            pos += n + int(rng.integers(1, 12))
    chains.append(center_chain(len(chains)))
    return chains


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_matrix_tracks_every_merge(seed):
    chains = random_instance(seed)
    checks = []

    def hook(state):
        assert state.M.shape == (len(state.chains), len(state.chains))
        assert np.array_equal(state.M, matrix_oracle(state.chains))
        checks.append(1)

    counts = []
    for params in SCHEDULE:
        state = SystemState(chains, None, CY, CX, 360, params)
        state.on_merge = hook
        chains, _, m = connect_chains_main_logic(state)
        assert np.array_equal(m, matrix_oracle(chains))
        counts.append(len(chains))
        for c in chains:
            assert c.size <= 360 and len(c.ray_set) == c.size
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert checks, "no merge happened"


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_coverage_non_decreasing_and_deterministic(seed):
    chains = random_instance(seed)
    total = sum(c.size for c in chains if c.kind == NORMAL)
    out, _ = connect_chains(chains, None, CY, CX, 360)
    after = sum(c.size for c in out if c.kind == NORMAL)
    assert after >= total
    again, _ = connect_chains(random_instance(seed), None, CY, CX, 360)
    assert [c.rays for c in again] == [c.rays for c in out]
    assert [list(c.radii()) for c in again] == [list(c.radii()) for c in out]
