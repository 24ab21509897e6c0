"""Geodesic distances on the cost-map-weighted pixel grid.

The grid is 4-connected. Stepping between adjacent pixels p and q costs
EPS_BASE + (C(p) + C(q)) / 2, so even a zero cost map yields a strictly
positive metric. Shortest paths are resolved with a binary-heap Dijkstra
whose priority is the lexicographic triple (distance, source index,
pixel index); this pins down Voronoi labeling ties deterministically:
among all sources at minimal distance, the smallest match index owns the
pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import CostMap, EmptyMatchError, MatchSet

EPS_BASE = 1e-3


# ---------------------------------------------------------------------------
# Heap + Dijkstra kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _lex_less(d1, s1, p1, d2, s2, p2):
    if d1 < d2:
        return True
    if d1 > d2:
        return False
    if s1 < s2:
        return True
    if s1 > s2:
        return False
    return p1 < p2


@njit(cache=True)
def _heap_push(hd, hs, hp, size, d, s, p):
    i = size
    hd[i] = d
    hs[i] = s
    hp[i] = p
    while i > 0:
        parent = (i - 1) >> 1
        if _lex_less(hd[i], hs[i], hp[i], hd[parent], hs[parent], hp[parent]):
            hd[i], hd[parent] = hd[parent], hd[i]
            hs[i], hs[parent] = hs[parent], hs[i]
            hp[i], hp[parent] = hp[parent], hp[i]
            i = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(hd, hs, hp, size):
    d = hd[0]
    s = hs[0]
    p = hp[0]
    size -= 1
    if size > 0:
        hd[0] = hd[size]
        hs[0] = hs[size]
        hp[0] = hp[size]
        i = 0
        while True:
            left = 2 * i + 1
            if left >= size:
                break
            child = left
            right = left + 1
            if right < size and _lex_less(hd[right], hs[right], hp[right], hd[left], hs[left], hp[left]):
                child = right
            if _lex_less(hd[child], hs[child], hp[child], hd[i], hs[i], hp[i]):
                hd[i], hd[child] = hd[child], hd[i]
                hs[i], hs[child] = hs[child], hs[i]
                hp[i], hp[child] = hp[child], hp[i]
                i = child
            else:
                break
    return d, s, p, size


@njit(cache=True)
def _grid_dijkstra(cost, src_pix, src_idx):
    """Multi-source Dijkstra over the 4-connected grid.

    Returns (dist, label) flat arrays; `label` holds the source index
    owning each pixel under lexicographic (distance, source) minimality.
    """
    h, w = cost.shape
    n = h * w
    flat = cost.ravel()
    dist = np.full(n, np.inf)
    label = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.uint8)
    cap = 4 * n + src_pix.shape[0] + 4
    hd = np.empty(cap)
    hs = np.empty(cap, dtype=np.int64)
    hp = np.empty(cap, dtype=np.int64)
    size = 0
    for k in range(src_pix.shape[0]):
        p = src_pix[k]
        s = src_idx[k]
        if dist[p] > 0.0 or (dist[p] == 0.0 and s < label[p]):
            dist[p] = 0.0
            label[p] = s
            size = _heap_push(hd, hs, hp, size, 0.0, s, p)
    while size > 0:
        d, s, p, size = _heap_pop(hd, hs, hp, size)
        if done[p] == 1 or d != dist[p] or s != label[p]:
            continue
        done[p] = 1
        y = p // w
        x = p - y * w
        cp = flat[p]
        if x + 1 < w:
            q = p + 1
            if done[q] == 0:
                wgt = EPS_BASE + 0.5 * (cp + flat[q])
                nd = d + wgt
                if nd < dist[q] or (nd == dist[q] and s < label[q]):
                    dist[q] = nd
                    label[q] = s
                    size = _heap_push(hd, hs, hp, size, nd, s, q)
        if x > 0:
            q = p - 1
            if done[q] == 0:
                wgt = EPS_BASE + 0.5 * (cp + flat[q])
                nd = d + wgt
                if nd < dist[q] or (nd == dist[q] and s < label[q]):
                    dist[q] = nd
                    label[q] = s
                    size = _heap_push(hd, hs, hp, size, nd, s, q)
        if y + 1 < h:
            q = p + w
            if done[q] == 0:
                wgt = EPS_BASE + 0.5 * (cp + flat[q])
                nd = d + wgt
                if nd < dist[q] or (nd == dist[q] and s < label[q]):
                    dist[q] = nd
                    label[q] = s
                    size = _heap_push(hd, hs, hp, size, nd, s, q)
        if y > 0:
            q = p - w
            if done[q] == 0:
                wgt = EPS_BASE + 0.5 * (cp + flat[q])
                nd = d + wgt
                if nd < dist[q] or (nd == dist[q] and s < label[q]):
                    dist[q] = nd
                    label[q] = s
                    size = _heap_push(hd, hs, hp, size, nd, s, q)
    return dist, label


@njit(cache=True)
def _graph_dijkstra(indptr, indices, weights, src, kmax):
    """Dijkstra over a CSR graph, stopping after `kmax` settled nodes.

    Returns (nodes, dists) in settle order, i.e. sorted by (distance,
    node index).
    """
    n = indptr.shape[0] - 1
    limit = kmax if kmax < n else n
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.uint8)
    out_nodes = np.empty(limit, dtype=np.int64)
    out_dist = np.empty(limit)
    cap = indices.shape[0] + n + 4
    hd = np.empty(cap)
    hs = np.empty(cap, dtype=np.int64)
    hp = np.empty(cap, dtype=np.int64)
    size = 0
    count = 0
    dist[src] = 0.0
    size = _heap_push(hd, hs, hp, size, 0.0, src, 0)
    while size > 0 and count < limit:
        d, u, _, size = _heap_pop(hd, hs, hp, size)
        if done[u] == 1 or d > dist[u]:
            continue
        done[u] = 1
        out_nodes[count] = u
        out_dist[count] = d
        count += 1
        if count == limit:
            break
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if done[v] == 1:
                continue
            nd = d + weights[e]
            if nd < dist[v]:
                dist[v] = nd
                size = _heap_push(hd, hs, hp, size, nd, v, 0)
    return out_nodes[:count], out_dist[:count]


# ---------------------------------------------------------------------------
# Public types
# ---------------------------------------------------------------------------

@dataclass
class DistanceMap:
    """Single-source geodesic distances over the grid."""

    distances: np.ndarray
    source: tuple

    @property
    def height(self) -> int:
        return self.distances.shape[0]

    @property
    def width(self) -> int:
        return self.distances.shape[1]


@dataclass
class Labeling:
    """Geodesic Voronoi assignment of every pixel to its closest match.

    `labels` holds match indices, `distances` the geodesic distance to
    the owning match. Matches whose rounded pixel coincides with an
    earlier match never own pixels.
    """

    labels: np.ndarray
    distances: np.ndarray
    n_matches: int

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass
class MatchGraph:
    """Voronoi-adjacency graph over matches (undirected, CSR storage)."""

    n_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def edges(self):
        """Yield (m, n, weight) with m < n, in deterministic order."""
        for m in range(self.n_nodes):
            for e in range(self.indptr[m], self.indptr[m + 1]):
                n = int(self.indices[e])
                if m < n:
                    yield m, n, float(self.weights[e])

    def neighbor_count(self, m: int) -> int:
        return int(self.indptr[m + 1] - self.indptr[m])


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def grid_edge_weight(cost_map: CostMap, p, q) -> float:
    """Traversal cost between 4-adjacent pixels p = (x, y) and q = (x, y)."""
    (x1, y1), (x2, y2) = (int(p[0]), int(p[1])), (int(q[0]), int(q[1]))
    values = cost_map.values
    h, w = values.shape
    for x, y in ((x1, y1), (x2, y2)):
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"pixel ({x}, {y}) out of bounds")
    if abs(x1 - x2) + abs(y1 - y2) != 1:
        raise ValueError("pixels are not 4-adjacent")
    return EPS_BASE + 0.5 * (values[y1, x1] + values[y2, x2])


def exact_geodesic_map(cost_map: CostMap, source) -> DistanceMap:
    """Single-source geodesic distances from `source` = (x, y)."""
    x, y = int(source[0]), int(source[1])
    values = cost_map.values
    h, w = values.shape
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"source ({x}, {y}) out of bounds")
    src_pix = np.array([y * w + x], dtype=np.int64)
    src_idx = np.zeros(1, dtype=np.int64)
    dist, _ = _grid_dijkstra(values, src_pix, src_idx)
    return DistanceMap(dist.reshape(h, w), (x, y))


def seed_pixels(matches: MatchSet, width: int, height: int):
    """Rounded in-bounds seed pixel per match, plus the indices that
    survive collapsing coincident pixels (keep-first)."""
    xs = np.clip(np.rint(matches.positions[:, 0]), 0, width - 1).astype(np.int64)
    ys = np.clip(np.rint(matches.positions[:, 1]), 0, height - 1).astype(np.int64)
    flat = ys * width + xs
    _, first = np.unique(flat, return_index=True)
    keep = np.sort(first)
    return flat, keep


def label_assignment(cost_map: CostMap, matches: MatchSet) -> Labeling:
    """Geodesic Voronoi labeling of all pixels to match indices.

    Matches seed the multi-source Dijkstra at their rounded pixel
    positions; coincident seeds collapse to the first match. Ties in
    distance go to the smaller match index.
    """
    if len(matches) == 0:
        raise EmptyMatchError("label assignment needs at least one match")
    values = cost_map.values
    h, w = values.shape
    flat, keep = seed_pixels(matches, w, h)
    dist, label = _grid_dijkstra(values, flat[keep], keep)
    return Labeling(label.reshape(h, w), dist.reshape(h, w), len(matches))


def build_match_graph(labeling: Labeling, cost_map: CostMap, matches: MatchSet) -> MatchGraph:
    """Connect matches whose Voronoi cells touch.

    For every 4-adjacent pixel pair (x, y) with different labels the
    candidate weight is d(x) + w(x, y) + d(y); the edge weight is the
    minimum candidate over the shared cell boundary. That path stays
    inside the two cells, so the weight upper-bounds the unrestricted
    geodesic distance between the two matches.
    """
    lab = labeling.labels
    dist = labeling.distances
    values = cost_map.values
    n = labeling.n_matches

    lo_parts, hi_parts, cand_parts = [], [], []

    a, b = lab[:, :-1], lab[:, 1:]
    mask = a != b
    if mask.any():
        wgt = EPS_BASE + 0.5 * (values[:, :-1][mask] + values[:, 1:][mask])
        cand = dist[:, :-1][mask] + wgt + dist[:, 1:][mask]
        la, lb = a[mask], b[mask]
        lo_parts.append(np.minimum(la, lb))
        hi_parts.append(np.maximum(la, lb))
        cand_parts.append(cand)

    a, b = lab[:-1, :], lab[1:, :]
    mask = a != b
    if mask.any():
        wgt = EPS_BASE + 0.5 * (values[:-1, :][mask] + values[1:, :][mask])
        cand = dist[:-1, :][mask] + wgt + dist[1:, :][mask]
        la, lb = a[mask], b[mask]
        lo_parts.append(np.minimum(la, lb))
        hi_parts.append(np.maximum(la, lb))
        cand_parts.append(cand)

    if not lo_parts:
        indptr = np.zeros(n + 1, dtype=np.int64)
        return MatchGraph(n, indptr, np.empty(0, dtype=np.int64), np.empty(0))

    lo = np.concatenate(lo_parts)
    hi = np.concatenate(hi_parts)
    cand = np.concatenate(cand_parts)

    key = lo * np.int64(n) + hi
    uniq, inverse = np.unique(key, return_inverse=True)
    wmin = np.full(uniq.size, np.inf)
    np.minimum.at(wmin, inverse, cand)
    lo_u = (uniq // n).astype(np.int64)
    hi_u = (uniq % n).astype(np.int64)

    rows = np.concatenate([lo_u, hi_u])
    cols = np.concatenate([hi_u, lo_u])
    vals = np.concatenate([wmin, wmin])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return MatchGraph(n, indptr, cols, vals)


def knn_matches(graph: MatchGraph, m: int, k: int):
    """Up to k nearest graph nodes from m (self included at distance 0).

    Sorted ascending by distance, ties by node index; fewer than k
    entries come back when m's component is smaller.
    """
    if not 0 <= m < graph.n_nodes:
        raise ValueError(f"match index {m} out of range")
    if k < 1:
        raise ValueError("k must be at least 1")
    nodes, dists = _graph_dijkstra(graph.indptr, graph.indices, graph.weights, m, k)
    return [(int(node), float(d)) for node, d in zip(nodes, dists)]


def graph_distances(graph: MatchGraph, m: int) -> np.ndarray:
    """Shortest-path distances from m to every node; +inf off-component."""
    nodes, dists = _graph_dijkstra(graph.indptr, graph.indices, graph.weights, m, graph.n_nodes)
    out = np.full(graph.n_nodes, np.inf)
    out[nodes] = dists
    return out
