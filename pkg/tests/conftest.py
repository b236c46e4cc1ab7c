import math
import sys

import numpy as np
import pytest

from treerings.geometry import CENTER, NORMAL, Chain, Node

PITH = (100.0, 100.0)


def arc(rays, radius, cid=0, nr=360, pith=PITH, kind=NORMAL):
    """Chain with one node per ray; ``radius`` is a scalar or a per-ray callable/sequence."""
    cy, cx = pith
    rays = list(rays)
    if callable(radius):
        radii = [radius(r) for r in rays]
    elif np.ndim(radius) == 0:
        radii = [float(radius)] * len(rays)
    else:
        radii = list(radius)
    nodes = []
    for ray, r in zip(rays, radii):
        t = 2 * math.pi * ray / nr
        nodes.append(Node(cx + r * math.cos(t), cy + r * math.sin(t), ray % nr, float(r), cid))
    return Chain(cid, nodes, nr, kind)


def center_chain(cid, nr=360, pith=PITH):
    cy, cx = pith
    return Chain(cid, [Node(cx, cy, i, 0.0, cid) for i in range(nr)], nr, CENTER)


def wrap(a, b, nr=360):
    """Ray indices from ``a`` to ``b`` inclusive, clockwise."""
    return [(a + i) % nr for i in range((b - a) % nr + 1)]


@pytest.fixture
def make_arc():
    return arc


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "LINES", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES:
        terminalreporter.write_line(line)
