"""Shared scene builders and independent oracles for the test suite.

Oracles here deliberately avoid the library's shortest-path and
estimation code paths: grid distances come from iterated Bellman-Ford
relaxation, graph distances from a plain heapq Dijkstra, affine fits
from raw least squares.
"""

import heapq

import numpy as np
from scipy.ndimage import gaussian_filter

from epicflow import CostMap, FlowField, Image, MatchSet

EPS_BASE = 1e-3


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def bellman_ford_grid(cost, source):
    """Single-source grid distances by relaxation to a fixed point.

    `source` is (x, y). Edge weights follow the same formula as the
    library but the algorithm shares nothing with Dijkstra.
    """
    h, w = cost.shape
    dist = np.full((h, w), np.inf)
    dist[source[1], source[0]] = 0.0
    wgt_h = EPS_BASE + 0.5 * (cost[:, :-1] + cost[:, 1:])
    wgt_v = EPS_BASE + 0.5 * (cost[:-1, :] + cost[1:, :])
    while True:
        nd = dist.copy()
        nd[:, 1:] = np.minimum(nd[:, 1:], dist[:, :-1] + wgt_h)
        nd[:, :-1] = np.minimum(nd[:, :-1], dist[:, 1:] + wgt_h)
        nd[1:, :] = np.minimum(nd[1:, :], dist[:-1, :] + wgt_v)
        nd[:-1, :] = np.minimum(nd[:-1, :], dist[1:, :] + wgt_v)
        if not (nd < dist).any():
            return nd
        dist = nd


def graph_dijkstra_py(n_nodes, edge_list, src):
    """Plain heapq Dijkstra over an undirected edge list [(m, n, w)]."""
    adj = [[] for _ in range(n_nodes)]
    for m, n, w in edge_list:
        adj[m].append((n, w))
        adj[n].append((m, w))
    dist = [float("inf")] * n_nodes
    dist[src] = 0.0
    heap = [(0.0, src)]
    done = [False] * n_nodes
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adj[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return np.asarray(dist)


def structure_tensor_patch(image_gray, x, y, radius):
    """Brute-force structure tensor at (x, y): explicit padded patch sum."""
    padded = np.pad(image_gray, 1, mode="edge")
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    gx = np.pad(gx, radius, mode="edge")
    gy = np.pad(gy, radius, mode="edge")
    jxx = jxy = jyy = 0.0
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            vx = gx[y + dy, x + dx]
            vy = gy[y + dy, x + dx]
            jxx += vx * vx
            jxy += vx * vy
            jyy += vy * vy
    return np.array([[jxx, jxy], [jxy, jyy]])


def affine_lstsq(positions, targets):
    """Unweighted normal-equations fit of targets = A p + t."""
    n = positions.shape[0]
    design = np.column_stack([positions, np.ones(n)])
    theta, *_ = np.linalg.lstsq(design, targets, rcond=None)
    return theta[:2, :].T, theta[2, :]


# ---------------------------------------------------------------------------
# Scene builders
# ---------------------------------------------------------------------------

def smooth_image(h, w, seed, channels=1, lo=0.1, hi=0.9, sigma=2.0):
    rng = np.random.default_rng(seed)
    data = np.stack(
        [gaussian_filter(rng.random((h, w)), sigma) for _ in range(channels)], axis=2)
    dmin, dmax = data.min(), data.max()
    return Image(lo + (hi - lo) * (data - dmin) / (dmax - dmin))


def periodic_texture(h, w, seed=0, contrast=0.45):
    """Band-limited periodic texture; rolling it keeps correspondences exact."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    base = np.zeros((h, w))
    for _ in range(8):
        fy = rng.integers(1, 7)
        fx = rng.integers(1, 9)
        phase = rng.uniform(0, 2 * np.pi)
        base += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (fy * yy / h + fx * xx / w) + phase)
    base = 0.5 + contrast * base / np.abs(base).max()
    return Image(base)


def translated_pair(h, w, dx, dy, seed=0):
    """Periodic texture pair with exact integer ground-truth flow (dx, dy).

    I2(q) = I1(q - F), so pixel p of image 1 reappears at p + F in
    image 2.
    """
    img1 = periodic_texture(h, w, seed)
    img2 = Image(np.roll(img1.data[:, :, 0], shift=(dy, dx), axis=(0, 1)))
    gt = FlowField(np.broadcast_to(
        np.array([float(dx), float(dy)]), (h, w, 2)).copy())
    return img1, img2, gt


def constant_flow(h, w, u, v):
    return FlowField(np.broadcast_to(np.array([float(u), float(v)]), (h, w, 2)).copy())


def affine_flow_field(h, w, matrix, translation):
    """Dense displacement field of the map p -> matrix @ p + translation."""
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    u = matrix[0, 0] * xs + matrix[0, 1] * ys + translation[0] - xs
    v = matrix[1, 0] * xs + matrix[1, 1] * ys + translation[1] - ys
    return FlowField(np.stack([u, v], axis=2))


def random_affine(seed, max_cond=10.0, spread=0.15, shift=4.0):
    """Random near-identity affine map with bounded condition number."""
    rng = np.random.default_rng(seed)
    while True:
        matrix = np.eye(2) + rng.uniform(-spread, spread, size=(2, 2))
        if np.linalg.cond(matrix) <= max_cond:
            break
    translation = rng.uniform(-shift, shift, size=2)
    return matrix, translation


def matches_from_flow(gt, n, seed, noise=0.0, exclude=None):
    """Sample matches at random integer positions of a ground-truth field."""
    h, w = gt.vectors.shape[:2]
    rng = np.random.default_rng(seed)
    if exclude is None:
        candidates = np.argwhere(np.ones((h, w), dtype=bool))
    else:
        candidates = np.argwhere(~exclude)
    pick = rng.choice(candidates.shape[0], size=min(n, candidates.shape[0]), replace=False)
    ys = candidates[pick, 0].astype(float)
    xs = candidates[pick, 1].astype(float)
    disp = gt.vectors[candidates[pick, 0], candidates[pick, 1]].copy()
    if noise > 0:
        disp += rng.normal(0.0, noise, size=disp.shape)
    return MatchSet(np.column_stack([xs, ys, xs + disp[:, 0], ys + disp[:, 1]]))


def piecewise_scene(seed, h=48, w=64, gap=6.0, band=1):
    """Two affine motion regions split by a wavy high-cost curve.

    Returns (cost_map, gt_flow, region_mask) where region_mask is True on
    the right side of the boundary. The cost map is 1 on a band around
    the boundary and 0 elsewhere; the two motions differ by `gap` pixels
    on average.
    """
    rng = np.random.default_rng(seed)
    amp = rng.uniform(2.0, 6.0)
    period = rng.uniform(0.7, 1.6)
    phase = rng.uniform(0, 2 * np.pi)
    ys = np.arange(h)
    curve = w / 2.0 + amp * np.sin(2 * np.pi * period * ys / h + phase)

    xs_grid, ys_grid = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    right = xs_grid >= curve[:, None]

    cost = np.zeros((h, w))
    for y in range(h):
        lo = int(round(curve[y])) - band
        hi = int(round(curve[y])) + band
        cost[y, max(lo, 0):min(hi + 1, w)] = 1.0

    m_left = np.eye(2) + rng.uniform(-0.05, 0.05, size=(2, 2))
    t_left = rng.uniform(-2.0, 2.0, size=2)
    m_right = np.eye(2) + rng.uniform(-0.05, 0.05, size=(2, 2))
    t_right = t_left + rng.choice([-1.0, 1.0], size=2) * gap

    left_flow = affine_flow_field(h, w, m_left, t_left).vectors
    right_flow = affine_flow_field(h, w, m_right, t_right).vectors
    gt = FlowField(np.where(right[:, :, None], right_flow, left_flow))
    return CostMap(cost), gt, right


def affine_scene(seed, h=36, w=48, spread=0.04, shift=3.0):
    """Image pair consistent with a global affine ground-truth flow.

    The second image is built so that I2(p + F(p)) ~= I1(p), which keeps
    the variational data term in agreement with the ground truth.
    """
    from epicflow import warp_image

    matrix, translation = random_affine(seed, spread=spread, shift=shift)
    gt = affine_flow_field(h, w, matrix, translation)
    img1 = periodic_texture(h, w, seed)
    inverse = np.linalg.inv(matrix)
    xs, ys = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pts = np.stack([xs - translation[0], ys - translation[1]], axis=2)
    back = pts @ inverse.T
    sampling = FlowField(np.stack([back[:, :, 0] - xs, back[:, :, 1] - ys], axis=2))
    img2, _ = warp_image(img1, sampling)
    img2 = Image(np.clip(img2.data, 0.0, 1.0))
    return img1, img2, gt


def flow_aee(est, gt, valid=None):
    diff = est.vectors - gt.vectors
    ee = np.hypot(diff[:, :, 0], diff[:, :, 1])
    if valid is not None:
        ee = ee[valid]
    return float(ee.mean())
