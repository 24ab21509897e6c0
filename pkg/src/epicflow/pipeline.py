"""End-to-end flow estimation: cost map, pruning, interpolation, refinement."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .edges import external_cost_map, gradient_cost_map
from .geodesic import Labeling
from .interpolation import DEFAULT_K, InterpConfig, interpolate
from .match_prep import (
    DEFAULT_PATCH_RADIUS,
    DEFAULT_SALIENCY_THRESHOLD,
    consistency_filter,
    saliency_filter,
)
from .model import CostMap, EmptyMatchError, FlowField, Image, MatchSet
from .variational import VarParams, refine


@dataclass
class PipelineConfig:
    """Knobs for one pipeline run.

    `cost_map=None` derives the cost map from the first image's gradient;
    otherwise the supplied (externally detected) edge map is clamped and
    used verbatim. `saliency_threshold=None` / `consistency_residual=None`
    disable the respective pruning stage — synthetic matches have no
    image support, so saliency pruning is turned off for them.
    """

    interp: InterpConfig = field(default_factory=InterpConfig)
    var: VarParams = field(default_factory=VarParams)
    saliency_threshold: float | None = DEFAULT_SALIENCY_THRESHOLD
    saliency_patch_radius: int = DEFAULT_PATCH_RADIUS
    consistency_residual: float | None = 5.0
    match_scale: float = 1.0
    cost_map: CostMap | None = None
    skip_variational: bool = False
    keep_interpolation: bool = False
    keep_labeling: bool = False


@dataclass
class Diagnostics:
    """Stage counters, timings, and optional intermediates."""

    matches_in: int = 0
    matches_out_of_bounds: int = 0
    matches_after_saliency: int = 0
    matches_after_consistency: int = 0
    la_fallbacks: int = 0
    timings: dict = field(default_factory=dict)
    interpolated: FlowField | None = None
    labeling: Labeling | None = None


def _bounds_filter(matches: MatchSet, width: int, height: int):
    pos = matches.positions
    inside = (
        (pos[:, 0] >= 0.0) & (pos[:, 0] <= width - 1)
        & (pos[:, 1] >= 0.0) & (pos[:, 1] <= height - 1)
    )
    dropped = int((~inside).sum())
    if dropped:
        matches = matches.subset(np.flatnonzero(inside))
    return matches, dropped


def epicflow(image1: Image, image2: Image, matches: MatchSet,
             config: PipelineConfig | None = None):
    """Match pruning, edge-aware interpolation, variational refinement.

    Returns (FlowField, Diagnostics). Raises EmptyMatchError when
    pruning leaves nothing to interpolate, ValueError on dimension
    mismatches, NumericalBlowupError if refinement diverges.
    """
    config = config if config is not None else PipelineConfig()
    if image1.data.shape[:2] != image2.data.shape[:2]:
        raise ValueError("image dimensions disagree")
    height, width = image1.data.shape[:2]
    diag = Diagnostics(matches_in=len(matches))

    t0 = time.perf_counter()
    if config.cost_map is not None:
        if config.cost_map.values.shape != (height, width):
            raise ValueError("cost map dimensions disagree with images")
        cost_map = external_cost_map(config.cost_map)
    else:
        cost_map = gradient_cost_map(image1)
    t1 = time.perf_counter()

    current = matches if config.match_scale == 1.0 else matches.scaled(config.match_scale)
    current, diag.matches_out_of_bounds = _bounds_filter(current, width, height)
    if config.saliency_threshold is not None and len(current) > 0:
        current = saliency_filter(current, image1,
                                  config.saliency_patch_radius,
                                  config.saliency_threshold)
    diag.matches_after_saliency = len(current)
    if config.consistency_residual is not None and len(current) >= 2:
        current = consistency_filter(current, cost_map,
                                     kernel_a=config.interp.kernel_a,
                                     k_neighbors=DEFAULT_K["nw"],
                                     residual_px=config.consistency_residual)
    diag.matches_after_consistency = len(current)
    if len(current) == 0:
        raise EmptyMatchError("all matches pruned")
    t2 = time.perf_counter()

    result = interpolate((height, width), cost_map, current, config.interp)
    diag.la_fallbacks = result.la_fallbacks
    if config.keep_interpolation or config.skip_variational:
        diag.interpolated = result.flow
    if config.keep_labeling:
        diag.labeling = result.labeling
    t3 = time.perf_counter()

    if config.skip_variational:
        flow = result.flow
    else:
        flow = refine(image1, image2, result.flow, config.var)
    t4 = time.perf_counter()

    diag.timings = {
        "edges": t1 - t0,
        "pruning": t2 - t1,
        "interpolation": t3 - t2,
        "variational": t4 - t3,
        "total": t4 - t0,
    }
    return flow, diag
