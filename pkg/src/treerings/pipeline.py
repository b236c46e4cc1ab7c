"""End-to-end ring detection on one image."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .chain_connect import connect_chains
from .devernay import EdgeDetectionParams, detect_edges
from .edge_filter import filter_edges
from .io import chains_to_labelme
from .postprocess import postprocess
from .preprocess import preprocess
from .sampling import sampling_edges


@dataclass
class DetectionParams:
    sigma: float = 3.0
    th_low: float = 5.0
    th_high: float = 15.0
    alpha: float = 30.0
    nr: int = 360
    min_chain_length: int = 2
    height: int | None = None
    width: int | None = None

    def validate(self):
        EdgeDetectionParams(self.sigma, self.th_low, self.th_high)
        if not 0 < self.alpha <= 180:
            raise ValueError("alpha must lie in (0, 180]")
        if self.nr < 3:
            raise ValueError("nr must be at least 3")
        if self.min_chain_length < 1:
            raise ValueError("min_chain_length must be at least 1")
        if (self.height is None) != (self.width is None):
            raise ValueError("height and width must be given together")


@dataclass
class DetectionResult:
    rings: list
    labelme: dict
    pith: tuple  # working-resolution (cy, cx)
    working_shape: tuple
    original_shape: tuple
    timings: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict, repr=False)


def detect(image: np.ndarray, cy: float, cx: float, params: DetectionParams = DetectionParams(),
           image_path: str = "", keep_stages: bool = False, trace=None) -> DetectionResult:
    """Run every stage and return closed rings in working coordinates.

    ``trace`` receives the chain count after each connect pass.
    """
    params.validate()
    timings = {}
    t0 = time.perf_counter()

    def lap(name):
        nonlocal t0
        now = time.perf_counter()
        timings[name] = now - t0
        t0 = now

    pre = preprocess(image, params.height, params.width, cy, cx)
    lap("preprocess")
    curves, grad = detect_edges(pre, EdgeDetectionParams(params.sigma, params.th_low, params.th_high))
    lap("edges")
    filtered = filter_edges(curves, pre.cy, pre.cx, grad, params.alpha, pre)
    lap("filter")
    chains, nodes = sampling_edges(filtered, pre.cy, pre.cx, params.nr, params.min_chain_length, pre)
    lap("sampling")
    n_sampled = len(chains)
    passes = []
    connected, cnodes = connect_chains(chains, nodes, pre.cy, pre.cx, params.nr,
                                       trace=lambda i, n: (passes.append(n), trace and trace(i, n)))
    lap("connect")
    rings = postprocess(connected, cnodes, pre.cy, pre.cx, params.nr)
    lap("postprocess")
    doc = chains_to_labelme(rings, (pre.height, pre.width), pre.original_shape, pre.pith, image_path)
    timings["total"] = sum(timings.values())
    counts = {"curves": len(curves), "filtered": len(filtered), "chains": n_sampled,
              "connect_passes": passes, "rings": len(rings)}
    stages = {}
    if keep_stages:
        stages = {"pre": pre, "curves": curves, "grad": grad, "filtered": filtered,
                  "sampled": chains, "connected": connected}
    return DetectionResult(rings, doc, pre.pith, (pre.height, pre.width), pre.original_shape,
                           timings, counts, stages)
