import numpy as np
import pytest

from epicflow import (
    CostMap,
    Image,
    external_cost_map,
    gradient_cost_map,
    smoothness_weights,
)
from epicflow.edges import central_gradient, gradient_norm, luminance


class TestGradientCostMap:
    def test_constant_image_is_zero(self):
        cm = gradient_cost_map(Image(np.full((8, 8), 0.3)))
        assert np.array_equal(cm.values, np.zeros((8, 8)))

    def test_vertical_step_edge(self):
        # step between columns 3 and 4 on a 6x10 image: central differences
        # put gradient 0.5 on the two adjacent columns, 0 elsewhere
        data = np.zeros((6, 10))
        data[:, 4:] = 1.0
        cm = gradient_cost_map(Image(data))
        # 20% of pixels carry the max, so the 99th percentile is the max
        # and the two step columns normalize to exactly 1
        assert np.array_equal(cm.values[:, 3], np.ones(6))
        assert np.array_equal(cm.values[:, 4], np.ones(6))
        others = np.delete(cm.values, [3, 4], axis=1)
        assert np.array_equal(others, np.zeros_like(others))

    def test_invariant_to_constant_offset(self):
        rng = np.random.default_rng(5)
        base = rng.random((7, 9)) * 0.5
        a = gradient_cost_map(Image(base))
        b = gradient_cost_map(Image(base + 0.25))
        assert np.allclose(a.values, b.values)

    def test_range(self):
        rng = np.random.default_rng(6)
        cm = gradient_cost_map(Image(rng.random((16, 16))))
        assert cm.values.min() >= 0.0 and cm.values.max() <= 1.0

    def test_mirror_commutes(self):
        rng = np.random.default_rng(8)
        data = rng.random((10, 12))
        direct = gradient_cost_map(Image(data[:, ::-1].copy()))
        mirrored = gradient_cost_map(Image(data)).values[:, ::-1]
        assert np.allclose(direct.values, mirrored)
        direct = gradient_cost_map(Image(data[::-1, :].copy()))
        flipped = gradient_cost_map(Image(data)).values[::-1, :]
        assert np.allclose(direct.values, flipped)


class TestSmoothnessWeights:
    def test_constant_image_all_ones(self):
        sw = smoothness_weights(Image(np.full((5, 5), 0.7)), kappa=5.0)
        assert np.array_equal(sw.values, np.ones((5, 5)))

    def test_half_weight_at_known_gradient(self):
        # luminance ramp with slope ln(2)/5 => alpha = exp(-5 * ln(2)/5) = 0.5
        slope = np.log(2.0) / 5.0
        data = slope * np.arange(8)[None, :] * np.ones((4, 1))
        sw = smoothness_weights(Image(data), kappa=5.0)
        # interior columns see the exact slope; border columns see half of it
        assert np.allclose(sw.values[:, 1:-1], 0.5)

    def test_monotone_in_gradient(self):
        rng = np.random.default_rng(2)
        img = Image(rng.random((12, 12)))
        g = gradient_norm(img)
        alpha = smoothness_weights(img, kappa=5.0).values
        order = np.argsort(g.ravel())
        assert (np.diff(alpha.ravel()[order]) <= 1e-15).all()

    def test_in_unit_interval(self):
        rng = np.random.default_rng(3)
        sw = smoothness_weights(Image(rng.random((9, 9))), kappa=5.0)
        assert ((sw.values > 0) & (sw.values <= 1)).all()

    def test_rejects_bad_kappa(self):
        with pytest.raises(ValueError):
            smoothness_weights(Image(np.zeros((2, 2))), kappa=0.0)
        with pytest.raises(ValueError):
            smoothness_weights(Image(np.zeros((2, 2))), kappa=-1.0)


class TestHelpers:
    def test_luminance_weights(self):
        data = np.zeros((1, 1, 3))
        data[0, 0] = [1.0, 0.5, 0.25]
        assert luminance(Image(data))[0, 0] == pytest.approx(
            0.299 * 1.0 + 0.587 * 0.5 + 0.114 * 0.25)

    def test_central_gradient_replicated_borders(self):
        f = np.array([[0.0, 1.0, 4.0]])
        gx, gy = central_gradient(f)
        # borders replicate: gx[0] = (f[1]-f[0])/2, gx[-1] = (f[2]-f[1])/2
        assert gx.tolist() == [[0.5, 2.0, 1.5]]
        assert gy.tolist() == [[0.0, 0.0, 0.0]]

    def test_external_cost_map_clamps(self):
        cm = external_cost_map(CostMap(np.array([[0.0, 0.5, 3.0]])))
        assert cm.values.tolist() == [[0.0, 0.5, 1.0]]
