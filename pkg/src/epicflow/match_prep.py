"""Match pruning and synthetic match generation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .edges import central_gradient, luminance
from .interpolation import InterpConfig, interpolate
from .model import CostMap, FlowField, Image, MatchSet, OcclusionMask

DEFAULT_PATCH_RADIUS = 2
DEFAULT_SALIENCY_THRESHOLD = 1e-4
DEFAULT_CONSISTENCY_RESIDUAL = 5.0


@dataclass
class SynthSpec:
    """Controls for ground-truth-derived synthetic matches.

    density: match count as a fraction of non-occluded pixels, in [0, 1].
    corruption: fraction of matches whose target is replaced by a random
    in-bounds position, in [0, 1].
    """

    density: float
    corruption: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must lie in [0, 1]")
        if not 0.0 <= self.corruption <= 1.0:
            raise ValueError("corruption must lie in [0, 1]")


def structure_tensor_min_eig(image: Image, patch_radius: int = DEFAULT_PATCH_RADIUS) -> np.ndarray:
    """Smaller eigenvalue of the luminance structure tensor per pixel.

    The tensor sums outer products of central-difference gradients over a
    (2r+1)^2 box window with replicated borders. The result is clipped at
    zero so thresholding at zero keeps everything.
    """
    if patch_radius < 1:
        raise ValueError("patch_radius must be at least 1")
    gx, gy = central_gradient(luminance(image))
    size = 2 * patch_radius + 1
    area = float(size * size)
    jxx = uniform_filter(gx * gx, size=size, mode="nearest") * area
    jxy = uniform_filter(gx * gy, size=size, mode="nearest") * area
    jyy = uniform_filter(gy * gy, size=size, mode="nearest") * area
    half_trace = 0.5 * (jxx + jyy)
    radius = np.sqrt((0.5 * (jxx - jyy)) ** 2 + jxy ** 2)
    return np.maximum(half_trace - radius, 0.0)


def saliency_filter(matches: MatchSet, image: Image,
                    patch_radius: int = DEFAULT_PATCH_RADIUS,
                    threshold: float = DEFAULT_SALIENCY_THRESHOLD) -> MatchSet:
    """Keep matches whose source patch has structure-tensor min eigenvalue
    at or above `threshold`; flat patches are the ones removed."""
    if len(matches) == 0:
        return matches
    min_eig = structure_tensor_min_eig(image, patch_radius)
    h, w = min_eig.shape
    xs = np.clip(np.rint(matches.positions[:, 0]), 0, w - 1).astype(np.int64)
    ys = np.clip(np.rint(matches.positions[:, 1]), 0, h - 1).astype(np.int64)
    keep = min_eig[ys, xs] >= threshold
    return matches.subset(np.flatnonzero(keep))


def consistency_filter(matches: MatchSet, cost_map: CostMap,
                       kernel_a: float = 1.0, k_neighbors: int = 25,
                       residual_px: float = DEFAULT_CONSISTENCY_RESIDUAL) -> MatchSet:
    """Remove matches that disagree with a first interpolation pass.

    Runs one NW interpolation over the current set and drops every match
    whose own displacement differs from the interpolated flow at its
    position by more than `residual_px` (Euclidean norm). Single pass,
    not iterated. Fewer than 2 matches come back unchanged with a
    warning.
    """
    if residual_px <= 0:
        raise ValueError("residual_px must be positive")
    if len(matches) < 2:
        warnings.warn("consistency filter needs at least 2 matches; set unchanged")
        return matches
    h, w = cost_map.values.shape
    config = InterpConfig(estimator="nw", distance_mode="approx",
                          kernel_a=kernel_a, k_neighbors=k_neighbors)
    flow = interpolate((h, w), cost_map, matches, config).flow
    xs = np.clip(np.rint(matches.positions[:, 0]), 0, w - 1).astype(np.int64)
    ys = np.clip(np.rint(matches.positions[:, 1]), 0, h - 1).astype(np.int64)
    predicted = flow.vectors[ys, xs]
    residual = np.linalg.norm(matches.displacements - predicted, axis=1)
    return matches.subset(np.flatnonzero(residual <= residual_px))


def synthesize_matches(gt_flow: FlowField, occl_mask: OcclusionMask, spec: SynthSpec) -> MatchSet:
    """Generate seeded synthetic matches from ground-truth flow.

    Samples round(density * n_nonoccluded) non-occluded pixel positions
    uniformly without replacement; each maps to its ground-truth target.
    A fraction `corruption` of the sampled matches (again chosen
    uniformly) gets its target replaced by a uniform random in-bounds
    position in image 2.
    """
    if gt_flow.vectors.shape[:2] != occl_mask.flags.shape:
        raise ValueError("flow and mask dimensions disagree")
    h, w = occl_mask.flags.shape
    free = np.argwhere(~occl_mask.flags)
    count = int(round(spec.density * free.shape[0]))
    if count <= 0:
        raise ValueError("density yields no matches")
    rng = np.random.default_rng(spec.seed)
    pick = rng.choice(free.shape[0], size=count, replace=False)
    ys = free[pick, 0].astype(np.float64)
    xs = free[pick, 1].astype(np.float64)
    disp = gt_flow.vectors[free[pick, 0], free[pick, 1]]
    coords = np.column_stack([xs, ys, xs + disp[:, 0], ys + disp[:, 1]])
    n_corrupt = int(round(spec.corruption * count))
    if n_corrupt > 0:
        which = rng.choice(count, size=n_corrupt, replace=False)
        coords[which, 2] = rng.uniform(0.0, w - 1.0, size=n_corrupt)
        coords[which, 3] = rng.uniform(0.0, h - 1.0, size=n_corrupt)
    return MatchSet(coords)
