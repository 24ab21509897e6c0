import numpy as np
import pytest

from epicflow import (
    CostMap,
    EmptyMatchError,
    MatchSet,
    build_match_graph,
    exact_geodesic_map,
    graph_distances,
    grid_edge_weight,
    knn_matches,
    label_assignment,
)
from epicflow.geodesic import EPS_BASE, MatchGraph

from helpers import bellman_ford_grid, graph_dijkstra_py


def random_cost(h, w, seed):
    return CostMap(np.random.default_rng(seed).random((h, w)))


def matches_at(pixels):
    rows = [[float(x), float(y), float(x), float(y)] for x, y in pixels]
    return MatchSet(np.asarray(rows))


class TestGridEdgeWeight:
    def test_zero_cost_floor(self):
        cm = CostMap(np.zeros((3, 3)))
        assert grid_edge_weight(cm, (1, 1), (2, 1)) == EPS_BASE
        assert grid_edge_weight(cm, (1, 1), (1, 0)) == EPS_BASE

    def test_hand_value(self):
        cm = CostMap(np.array([[0.2, 0.6]]))
        assert grid_edge_weight(cm, (0, 0), (1, 0)) == pytest.approx(0.401, abs=0)

    def test_symmetric(self):
        cm = random_cost(4, 4, 0)
        for p, q in [((1, 2), (2, 2)), ((3, 1), (3, 0))]:
            assert grid_edge_weight(cm, p, q) == grid_edge_weight(cm, q, p)

    def test_rejects_non_adjacent(self):
        cm = CostMap(np.zeros((3, 3)))
        with pytest.raises(ValueError):
            grid_edge_weight(cm, (0, 0), (1, 1))
        with pytest.raises(ValueError):
            grid_edge_weight(cm, (0, 0), (2, 0))


class TestExactGeodesicMap:
    def test_zero_cost_is_manhattan(self):
        cm = CostMap(np.zeros((5, 7)))
        dm = exact_geodesic_map(cm, (2, 1))
        xs, ys = np.meshgrid(np.arange(7), np.arange(5))
        expected = EPS_BASE * (np.abs(xs - 2) + np.abs(ys - 1))
        assert np.allclose(dm.distances, expected, atol=1e-15)

    def test_1x3_hand_value(self):
        cm = CostMap(np.array([[0.0, 1.0, 0.0]]))
        dm = exact_geodesic_map(cm, (0, 0))
        assert dm.distances[0, 2] == pytest.approx(1.002, abs=1e-15)

    def test_matches_bellman_ford_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(40):
            h = int(rng.integers(1, 9))
            w = int(rng.integers(1, 9))
            cm = CostMap(rng.random((h, w)))
            sx = int(rng.integers(0, w))
            sy = int(rng.integers(0, h))
            got = exact_geodesic_map(cm, (sx, sy)).distances
            want = bellman_ford_grid(cm.values, (sx, sy))
            assert np.abs(got - want).max() <= 1e-12

    def test_out_of_bounds_source(self):
        with pytest.raises(ValueError):
            exact_geodesic_map(CostMap(np.zeros((3, 3))), (3, 0))


class TestLabelAssignment:
    def test_single_match_equals_exact_map(self):
        cm = random_cost(6, 8, 1)
        lab = label_assignment(cm, matches_at([(3, 2)]))
        assert (lab.labels == 0).all()
        dm = exact_geodesic_map(cm, (3, 2))
        assert np.array_equal(lab.distances, dm.distances)

    def test_two_matches_manhattan_ties_to_first(self):
        cm = CostMap(np.zeros((3, 5)))
        lab = label_assignment(cm, matches_at([(0, 1), (4, 1)]))
        # column 2 is equidistant; the tie goes to match 0
        expected = np.array([[0, 0, 0, 1, 1]] * 3)
        assert np.array_equal(lab.labels, expected)

    def test_against_per_match_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(15):
            h, w = 16, 16
            cm = CostMap(rng.random((h, w)))
            n = int(rng.integers(1, 6))
            pixels = set()
            while len(pixels) < n:
                pixels.add((int(rng.integers(0, w)), int(rng.integers(0, h))))
            pixels = sorted(pixels)
            lab = label_assignment(cm, matches_at(pixels))
            maps = np.stack([bellman_ford_grid(cm.values, p) for p in pixels])
            assert np.abs(lab.distances - maps.min(axis=0)).max() <= 1e-12
            # argmin returns the first minimizing index: the documented tie-break
            assert np.array_equal(lab.labels, np.argmin(maps, axis=0))

    def test_duplicate_pixel_collapses_to_first(self):
        cm = CostMap(np.zeros((4, 4)))
        lab = label_assignment(cm, matches_at([(1, 1), (1, 1), (3, 3)]))
        assert set(np.unique(lab.labels)) == {0, 2}

    def test_rounding_of_subpixel_matches(self):
        cm = CostMap(np.zeros((4, 4)))
        ms = MatchSet(np.array([[0.9, 1.2, 0.0, 0.0]]))
        lab = label_assignment(cm, ms)
        assert lab.distances[1, 1] == 0.0

    def test_empty_matches_error(self):
        with pytest.raises(EmptyMatchError):
            label_assignment(CostMap(np.zeros((2, 2))), MatchSet(np.empty((0, 4))))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(19)
        cm = CostMap(rng.random((12, 12)))
        pixels = [(2, 3), (9, 1), (5, 8), (11, 11)]
        perm = [2, 0, 3, 1]
        lab_a = label_assignment(cm, matches_at(pixels))
        lab_b = label_assignment(cm, matches_at([pixels[i] for i in perm]))
        # labels under the permuted ordering map back through the permutation
        inverse = np.argsort(perm)
        assert np.array_equal(inverse[lab_a.labels], lab_b.labels)
        assert np.array_equal(lab_a.distances, lab_b.distances)


class TestMatchGraph:
    def test_two_matches_single_edge_upper_bounds_exact(self):
        rng = np.random.default_rng(3)
        for seed in range(8):
            cm = CostMap(np.random.default_rng(seed).random((10, 10)))
            pix = [(1, 2), (8, 7)]
            lab = label_assignment(cm, matches_at(pix))
            graph = build_match_graph(lab, cm, matches_at(pix))
            edges = list(graph.edges())
            assert len(edges) == 1
            (m, n, w) = edges[0]
            assert (m, n) == (0, 1)
            exact = bellman_ford_grid(cm.values, pix[0])[pix[1][1], pix[1][0]]
            assert w >= exact - 1e-12

    def test_1x4_hand_value(self):
        cm = CostMap(np.zeros((1, 4)))
        ms = matches_at([(0, 0), (3, 0)])
        lab = label_assignment(cm, ms)
        graph = build_match_graph(lab, cm, ms)
        edges = list(graph.edges())
        assert len(edges) == 1
        # boundary between pixels 1|2: d=1e-3 each side plus the 1e-3 step
        assert edges[0][2] == pytest.approx(3e-3, abs=1e-15)

    def test_symmetric_no_self_loops(self):
        rng = np.random.default_rng(23)
        cm = CostMap(rng.random((14, 14)))
        pixels = [(2, 2), (11, 3), (4, 10), (12, 12), (7, 7)]
        ms = matches_at(pixels)
        lab = label_assignment(cm, ms)
        graph = build_match_graph(lab, cm, ms)
        seen = {}
        for m in range(graph.n_nodes):
            for e in range(graph.indptr[m], graph.indptr[m + 1]):
                n = int(graph.indices[e])
                assert n != m
                seen[(m, n)] = float(graph.weights[e])
        for (m, n), w in seen.items():
            assert seen[(n, m)] == w

    def test_weights_positive_finite(self):
        cm = CostMap(np.zeros((6, 6)))
        ms = matches_at([(0, 0), (5, 0), (0, 5), (5, 5)])
        lab = label_assignment(cm, ms)
        graph = build_match_graph(lab, cm, ms)
        assert (graph.weights > 0).all() and np.isfinite(graph.weights).all()

    def test_single_match_graph_empty(self):
        cm = CostMap(np.zeros((4, 4)))
        ms = matches_at([(2, 2)])
        lab = label_assignment(cm, ms)
        graph = build_match_graph(lab, cm, ms)
        assert list(graph.edges()) == []


class TestKnn:
    def path_graph(self):
        # a - b - c with weights 1, 1
        indptr = np.array([0, 1, 3, 4], dtype=np.int64)
        indices = np.array([1, 0, 2, 1], dtype=np.int64)
        weights = np.array([1.0, 1.0, 1.0, 1.0])
        return MatchGraph(3, indptr, indices, weights)

    def test_k1_is_self(self):
        assert knn_matches(self.path_graph(), 1, 1) == [(1, 0.0)]

    def test_path_graph_hand_values(self):
        assert knn_matches(self.path_graph(), 0, 3) == [(0, 0.0), (1, 1.0), (2, 2.0)]

    def test_smaller_component_returns_fewer(self):
        indptr = np.array([0, 1, 2, 2], dtype=np.int64)  # c isolated
        indices = np.array([1, 0], dtype=np.int64)
        weights = np.array([1.0, 1.0])
        graph = MatchGraph(3, indptr, indices, weights)
        assert knn_matches(graph, 0, 5) == [(0, 0.0), (1, 1.0)]

    def test_matches_heapq_oracle_and_admissibility(self):
        rng = np.random.default_rng(31)
        for seed in range(10):
            r = np.random.default_rng(seed)
            cm = CostMap(r.random((16, 16)))
            pixels = set()
            while len(pixels) < 5:
                pixels.add((int(r.integers(0, 16)), int(r.integers(0, 16))))
            pixels = sorted(pixels)
            ms = matches_at(pixels)
            lab = label_assignment(cm, ms)
            graph = build_match_graph(lab, cm, ms)
            edges = list(graph.edges())
            for m in range(len(pixels)):
                got = knn_matches(graph, m, 5)
                oracle = graph_dijkstra_py(len(pixels), edges, m)
                exact = bellman_ford_grid(cm.values, pixels[m])
                for node, d in got:
                    assert d == pytest.approx(oracle[node], abs=1e-12)
                    # graph distances never undercut the exact geodesic
                    px, py = pixels[node]
                    assert d >= exact[py, px] - 1e-12

    def test_metric_properties(self):
        rng = np.random.default_rng(5)
        cm = CostMap(rng.random((12, 12)))
        pixels = [(1, 1), (10, 2), (3, 9), (8, 8)]
        ms = matches_at(pixels)
        lab = label_assignment(cm, ms)
        graph = build_match_graph(lab, cm, ms)
        n = len(pixels)
        d = np.stack([graph_distances(graph, m) for m in range(n)])
        assert np.allclose(d, d.T)
        assert np.array_equal(np.diag(d), np.zeros(n))
        assert (d[~np.eye(n, dtype=bool)] > 0).all()
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    assert d[i, j] <= d[i, k] + d[k, j] + 1e-12

    def test_rejects_bad_args(self):
        graph = self.path_graph()
        with pytest.raises(ValueError):
            knn_matches(graph, 3, 1)
        with pytest.raises(ValueError):
            knn_matches(graph, 0, 0)
