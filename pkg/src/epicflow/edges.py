"""Cost maps and smoothness weights derived from image content."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CostMap, Image

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
COST_PERCENTILE = 99.0


@dataclass
class SmoothnessWeights:
    """Per-pixel regularization weight in (0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2 or arr.shape[0] <= 0 or arr.shape[1] <= 0:
            raise ValueError("weights must be HxW with positive dimensions")
        if not ((arr > 0) & (arr <= 1)).all():
            raise ValueError("weights must lie in (0, 1]")
        self.values = arr


def luminance(image: Image) -> np.ndarray:
    """Single-channel luminance, (H, W)."""
    data = image.data
    if data.shape[2] == 1:
        return data[:, :, 0]
    wr, wg, wb = LUMA_WEIGHTS
    return wr * data[:, :, 0] + wg * data[:, :, 1] + wb * data[:, :, 2]


def central_gradient(field: np.ndarray):
    """Central differences with replicated borders; returns (gx, gy)."""
    padded = np.pad(field, 1, mode="edge")
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    return gx, gy


def gradient_norm(image: Image) -> np.ndarray:
    """Euclidean norm of the luminance gradient, un-normalized."""
    gx, gy = central_gradient(luminance(image))
    return np.hypot(gx, gy)


def gradient_cost_map(image: Image) -> CostMap:
    """Luminance-gradient cost map, rescaled so the 99th percentile maps to 1.

    The percentile normalization puts self-computed edge maps on the same
    scale as detector outputs that already live in [0, 1], so the kernel
    coefficient transfers across edge sources. Constant images produce an
    all-zero map; when the percentile collapses to zero the maximum is
    used instead.
    """
    g = gradient_norm(image)
    scale = float(np.percentile(g, COST_PERCENTILE))
    if scale <= 0.0:
        scale = float(g.max())
    if scale <= 0.0:
        return CostMap(np.zeros_like(g))
    return CostMap(np.clip(g / scale, 0.0, 1.0))


def smoothness_weights(image: Image, kappa: float = 5.0) -> SmoothnessWeights:
    """Per-pixel weight exp(-kappa * |grad luminance|), in (0, 1]."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return SmoothnessWeights(np.exp(-float(kappa) * gradient_norm(image)))


def external_cost_map(cost_map: CostMap) -> CostMap:
    """Adapt an externally supplied edge map: clamp into [0, 1], no rescaling."""
    return CostMap(np.clip(cost_map.values, 0.0, 1.0))
