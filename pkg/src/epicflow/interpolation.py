"""Sparse-to-dense flow interpolation.

Two estimators: a kernel-weighted mean of match displacements (NW) and a
locally-weighted affine fit (LA). Both consume K-nearest-match
neighborhoods under one of four distance modes:

  approx     geodesic Voronoi labeling + match graph; one estimate per
             match, propagated over its cell (the fast path: the field
             is piecewise constant for NW, piecewise affine for LA)
  exact      per-pixel K nearest matches by exact geodesic distance
  euclidean  per-pixel K nearest matches by Euclidean distance
  mixed      Euclidean neighbor lists, approximate-geodesic kernel
             weights

Estimates operate on displacements rather than absolute targets, so a
single match extrapolates its own displacement everywhere. Kernel
weights exp(-a d) are evaluated after subtracting the smallest distance
in the neighborhood; both estimators are invariant to that rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geodesic import (
    Labeling,
    _graph_dijkstra,
    _grid_dijkstra,
    build_match_graph,
    graph_distances,
    label_assignment,
    seed_pixels,
)
from .model import CostMap, EmptyMatchError, FlowField, MatchSet

ESTIMATORS = ("nw", "la")
DISTANCE_MODES = ("approx", "exact", "euclidean", "mixed")
DEFAULT_K = {"nw": 25, "la": 100}

_RANK_TOL = 1e-12


class DegenerateAffineFit(ValueError):
    """Affine system is rank-deficient and unregularized."""


@dataclass
class InterpConfig:
    """Estimator/distance configuration.

    `k_neighbors=None` resolves to the per-estimator default (25 for NW,
    100 for LA). `la_regularization` scales the Tikhonov pull toward the
    translation estimate; zero gives the pure weighted least squares.
    """

    estimator: str = "la"
    distance_mode: str = "approx"
    kernel_a: float = 1.0
    k_neighbors: int | None = None
    la_regularization: float = 1e-3

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.distance_mode not in DISTANCE_MODES:
            raise ValueError(f"unknown distance mode {self.distance_mode!r}")
        if self.kernel_a <= 0:
            raise ValueError("kernel_a must be positive")
        if self.k_neighbors is None:
            self.k_neighbors = DEFAULT_K[self.estimator]
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1")
        if self.la_regularization < 0:
            raise ValueError("la_regularization must be nonnegative")


@dataclass
class AffineParams:
    """Affine map F(p) = matrix @ p + translation."""

    matrix: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64).reshape(2, 2)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(2)
        if not (np.isfinite(self.matrix).all() and np.isfinite(self.translation).all()):
            raise ValueError("affine parameters must be finite")

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) points through the transform."""
        return points @ self.matrix.T + self.translation


@dataclass
class InterpResult:
    flow: FlowField
    la_fallbacks: int = 0
    labeling: Labeling | None = None


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _kernel_weights(distances: np.ndarray, kernel_a: float) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    finite = np.isfinite(d)
    if not finite.any():
        return np.zeros_like(d)
    w = np.exp(-kernel_a * (d - d[finite].min()))
    w[~finite] = 0.0
    return w


def nw_estimate(positions, targets, distances, kernel_a=1.0) -> np.ndarray:
    """Kernel-weighted mean displacement.

    Weights exp(-a d) are computed shift-invariantly; if they still all
    vanish (e.g. every distance is infinite) the nearest neighbor's
    displacement wins outright.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    distances = np.asarray(distances, dtype=np.float64).reshape(-1)
    if positions.shape[0] == 0:
        raise EmptyMatchError("estimate needs at least one neighbor")
    disp = targets - positions
    w = _kernel_weights(distances, kernel_a)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        return disp[int(np.argmin(distances))].copy()
    return (w[:, None] * disp).sum(axis=0) / total


def la_estimate(positions, targets, distances, kernel_a=1.0,
                regularization=1e-3, anchor=(0.0, 0.0)) -> AffineParams:
    """Weighted affine fit in anchor-centered coordinates.

    Solves the kernel-weighted least squares for (A, t) mapping source
    positions to targets, damped by a Tikhonov term (scaled by the total
    kernel weight) toward the identity matrix plus the weighted mean
    displacement. Large regularization therefore degrades to the NW
    translation, zero regularization is the pure least squares; pure
    translations are recovered exactly for every regularization value.

    Raises DegenerateAffineFit when the unregularized system is
    rank-deficient (fewer than 3 neighbors, collinear neighbors) or the
    kernel mass vanishes.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    distances = np.asarray(distances, dtype=np.float64).reshape(-1)
    anchor = np.asarray(anchor, dtype=np.float64).reshape(2)
    n = positions.shape[0]
    if n == 0:
        raise EmptyMatchError("estimate needs at least one neighbor")
    disp = targets - positions
    w = _kernel_weights(distances, kernel_a)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateAffineFit("kernel weights vanished")
    tbar = (w[:, None] * disp).sum(axis=0) / total

    centered = positions - anchor
    design = np.column_stack([centered, np.ones(n)])
    weighted = design * w[:, None]
    gram = design.T @ weighted
    rhs = weighted.T @ disp

    lam = regularization * total
    if lam == 0.0:
        sv = np.linalg.svd(gram, compute_uv=False)
        if n < 3 or sv[0] <= 0.0 or sv[-1] <= sv[0] * _RANK_TOL:
            raise DegenerateAffineFit("rank-deficient affine system")
    else:
        gram = gram + lam * np.eye(3)
        rhs = rhs + lam * np.vstack([np.zeros((2, 2)), tbar[None, :]])
    try:
        theta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateAffineFit("singular affine system") from exc

    delta = theta[:2, :].T          # displacement Jacobian, A - I
    offset = theta[2, :]            # displacement at the anchor
    matrix = np.eye(2) + delta
    translation = offset - delta @ anchor
    return AffineParams(matrix, translation)


def _translation_params(positions, targets, distances, kernel_a) -> AffineParams:
    return AffineParams(np.eye(2), nw_estimate(positions, targets, distances, kernel_a))


# ---------------------------------------------------------------------------
# Dense interpolation
# ---------------------------------------------------------------------------

def interpolate(dims, cost_map: CostMap, matches: MatchSet, config: InterpConfig) -> InterpResult:
    """Dense displacement field from sparse matches.

    `dims` is (height, width) of image 1 and must agree with the cost
    map. Matches are deduplicated by rounded source pixel (keep-first)
    before any labeling. LA fits that degenerate fall back to the
    translation estimate; the count is reported in the result.
    """
    height, width = int(dims[0]), int(dims[1])
    if cost_map.values.shape != (height, width):
        raise ValueError(
            f"cost map {cost_map.values.shape} does not match dims {(height, width)}"
        )
    _, keep = seed_pixels(matches, width, height)
    kept = matches.subset(keep)
    if len(kept) == 0:
        raise EmptyMatchError("no matches to interpolate")

    if config.distance_mode == "approx":
        return _interpolate_approx(height, width, cost_map, kept, config)
    if config.distance_mode == "exact":
        idx, dist = _exact_knn(cost_map, kept, min(config.k_neighbors, len(kept)))
        return _fields_from_knn(height, width, kept, idx, dist, config)
    if config.distance_mode == "euclidean":
        idx, dist = _euclidean_knn(height, width, kept, min(config.k_neighbors, len(kept)))
        return _fields_from_knn(height, width, kept, idx, dist, config)
    # mixed: Euclidean neighbor lists, approximate-geodesic weights
    labeling = label_assignment(cost_map, kept)
    graph = build_match_graph(labeling, cost_map, kept)
    idx, _ = _euclidean_knn(height, width, kept, min(config.k_neighbors, len(kept)))
    dist = np.empty(idx.shape)
    flat_labels = labeling.labels.ravel()
    flat_dist = labeling.distances.ravel()
    for lab in np.unique(flat_labels):
        cell = flat_labels == lab
        gd = graph_distances(graph, int(lab))
        dist[cell] = flat_dist[cell, None] + gd[idx[cell]]
    result = _fields_from_knn(height, width, kept, idx, dist, config)
    result.labeling = labeling
    return result


def _interpolate_approx(height, width, cost_map, kept, config):
    labeling = label_assignment(cost_map, kept)
    graph = build_match_graph(labeling, cost_map, kept)
    positions = kept.positions
    targets = kept.targets
    m = len(kept)
    k = min(config.k_neighbors, m)
    a = config.kernel_a
    fallbacks = 0

    if config.estimator == "nw":
        estimates = np.empty((m, 2))
        for i in range(m):
            nodes, dists = _graph_dijkstra(graph.indptr, graph.indices, graph.weights, i, k)
            estimates[i] = nw_estimate(positions[nodes], targets[nodes], dists, a)
        flow = FlowField(estimates[labeling.labels])
        return InterpResult(flow, 0, labeling)

    mats = np.empty((m, 2, 2))
    trans = np.empty((m, 2))
    for i in range(m):
        nodes, dists = _graph_dijkstra(graph.indptr, graph.indices, graph.weights, i, k)
        pos, tgt = positions[nodes], targets[nodes]
        try:
            params = la_estimate(pos, tgt, dists, a, config.la_regularization,
                                 anchor=positions[i])
        except DegenerateAffineFit:
            fallbacks += 1
            params = _translation_params(pos, tgt, dists, a)
        mats[i] = params.matrix
        trans[i] = params.translation

    labels = labeling.labels
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    u = mats[labels, 0, 0] * xs + mats[labels, 0, 1] * ys + trans[labels, 0] - xs
    v = mats[labels, 1, 0] * xs + mats[labels, 1, 1] * ys + trans[labels, 1] - ys
    flow = FlowField(np.stack([u, v], axis=2))
    return InterpResult(flow, fallbacks, labeling)


def _exact_knn(cost_map, kept, k):
    """Per-pixel K nearest matches by exact geodesic distance.

    Streams one single-source map per match, merging into a running
    top-K with a stable sort so ties resolve to the smaller match index.
    Memory scales with (K + block) * n_pixels; intended for ablations at
    modest resolutions.
    """
    values = cost_map.values
    h, w = values.shape
    n = h * w
    m = len(kept)
    flat, _ = seed_pixels(kept, w, h)
    block = 16
    best_d = np.full((k, n), np.inf)
    best_i = np.full((k, n), -1, dtype=np.int64)
    one = np.zeros(1, dtype=np.int64)
    for start in range(0, m, block):
        stop = min(start + block, m)
        maps = np.empty((stop - start, n))
        for j, s in enumerate(range(start, stop)):
            dist, _ = _grid_dijkstra(values, flat[s:s + 1], one)
            maps[j] = dist
        cand_d = np.vstack([best_d, maps])
        cand_i = np.vstack([
            best_i,
            np.repeat(np.arange(start, stop, dtype=np.int64)[:, None], n, axis=1),
        ])
        # stable sort keeps the (distance, index) ordering invariant:
        # existing rows carry smaller indices than the incoming block
        order = np.argsort(cand_d, axis=0, kind="stable")[:k]
        best_d = np.take_along_axis(cand_d, order, axis=0)
        best_i = np.take_along_axis(cand_i, order, axis=0)
    return best_i.T.copy(), best_d.T.copy()


def _euclidean_knn(height, width, kept, k):
    """Per-pixel K nearest matches by Euclidean distance to match positions."""
    tree = cKDTree(kept.positions)
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    points = np.column_stack([xs.ravel(), ys.ravel()])
    dist, idx = tree.query(points, k=k)
    if k == 1:
        dist = dist[:, None]
        idx = idx[:, None]
    idx = idx.astype(np.int64)
    # re-sort each row by (distance, index) for deterministic ties
    o1 = np.argsort(idx, axis=1, kind="stable")
    dist = np.take_along_axis(dist, o1, axis=1)
    idx = np.take_along_axis(idx, o1, axis=1)
    o2 = np.argsort(dist, axis=1, kind="stable")
    dist = np.take_along_axis(dist, o2, axis=1)
    idx = np.take_along_axis(idx, o2, axis=1)
    return idx, dist


def _fields_from_knn(height, width, kept, idx, dist, config):
    """Per-pixel estimation from precomputed neighbor lists (N, k)."""
    positions = kept.positions
    targets = kept.targets
    a = config.kernel_a
    n = height * width
    fallbacks = 0

    if config.estimator == "nw":
        disp_sel = targets[idx] - positions[idx]
        lo = dist.min(axis=1, keepdims=True)
        shifted = np.where(np.isfinite(lo), dist - lo, np.inf)
        weights = np.exp(-a * shifted)
        weights[~np.isfinite(weights)] = 0.0
        total = weights.sum(axis=1)
        out = np.einsum("nk,nkc->nc", weights, disp_sel)
        good = total > 0
        out[good] /= total[good, None]
        bad = ~good
        if bad.any():
            nearest = dist[bad].argmin(axis=1)
            out[bad] = disp_sel[bad, nearest]
        return InterpResult(FlowField(out.reshape(height, width, 2)))

    out = np.empty((n, 2))
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    for i in range(n):
        pixel = np.array([xs[i % width], ys[i // width]])
        sel = idx[i]
        pos, tgt, d = positions[sel], targets[sel], dist[i]
        try:
            params = la_estimate(pos, tgt, d, a, config.la_regularization, anchor=pixel)
        except DegenerateAffineFit:
            fallbacks += 1
            params = _translation_params(pos, tgt, d, a)
        out[i] = params.apply(pixel[None, :])[0] - pixel
    return InterpResult(FlowField(out.reshape(height, width, 2)), fallbacks)
