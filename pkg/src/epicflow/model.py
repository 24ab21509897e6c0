"""Core data types: images, flow fields, match sets, cost maps, masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Image",
    "FlowField",
    "MatchSet",
    "CostMap",
    "OcclusionMask",
    "FormatError",
    "EmptyMatchError",
    "NumericalBlowupError",
]


class FormatError(ValueError):
    """Malformed or unsupported input file."""


class EmptyMatchError(RuntimeError):
    """No matches available for an operation that needs at least one."""


class NumericalBlowupError(ArithmeticError):
    """A solver produced non-finite values."""


def _require(condition, message):
    if not condition:
        raise ValueError(message)


@dataclass
class Image:
    """Intensity grid of shape (height, width, channels), float64.

    Values are nominally in [0, 1]; only finiteness is enforced so that
    derived images (e.g. warped samples with cubic overshoot) remain
    representable. Grayscale input of shape (H, W) is promoted to
    (H, W, 1).
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        _require(arr.ndim == 3 and arr.shape[2] in (1, 3), "image must be HxWx1 or HxWx3")
        _require(arr.shape[0] > 0 and arr.shape[1] > 0, "non-positive dimensions")
        _require(np.isfinite(arr).all(), "image contains non-finite values")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class FlowField:
    """Per-pixel displacement (u, v) from image 1 to image 2, shape (H, W, 2)."""

    vectors: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        _require(arr.ndim == 3 and arr.shape[2] == 2, "flow must be HxWx2")
        _require(arr.shape[0] > 0 and arr.shape[1] > 0, "non-positive dimensions")
        _require(np.isfinite(arr).all(), "flow contains non-finite values")
        self.vectors = arr

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.vectors[:, :, 0]

    @property
    def v(self) -> np.ndarray:
        return self.vectors[:, :, 1]


@dataclass
class MatchSet:
    """Sparse correspondences; rows are (x1, y1, x2, y2) with sub-pixel coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, 4)
        _require(arr.ndim == 2 and arr.shape[1] == 4, "matches must be Nx4")
        _require(np.isfinite(arr).all(), "matches contain non-finite values")
        self.coords = np.ascontiguousarray(arr)

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def positions(self) -> np.ndarray:
        """Source positions in image 1, shape (N, 2) as (x, y)."""
        return self.coords[:, 0:2]

    @property
    def targets(self) -> np.ndarray:
        """Target positions in image 2, shape (N, 2)."""
        return self.coords[:, 2:4]

    @property
    def displacements(self) -> np.ndarray:
        return self.coords[:, 2:4] - self.coords[:, 0:2]

    def subset(self, index) -> "MatchSet":
        return MatchSet(self.coords[index])

    def scaled(self, factor: float) -> "MatchSet":
        """Multiply every coordinate by `factor` (half-resolution matchers etc.)."""
        return MatchSet(self.coords * float(factor))

    def deduplicate(self) -> "MatchSet":
        """Drop matches whose source position repeats, keeping the first occurrence."""
        if len(self) == 0:
            return self
        _, first = np.unique(self.coords[:, 0:2], axis=0, return_index=True)
        keep = np.sort(first)
        if keep.size == len(self):
            return self
        return self.subset(keep)


@dataclass
class CostMap:
    """Per-pixel crossing cost (edge strength): nonnegative, nominally in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        _require(arr.ndim == 2, "cost map must be HxW")
        _require(arr.shape[0] > 0 and arr.shape[1] > 0, "non-positive dimensions")
        _require(np.isfinite(arr).all(), "cost map contains non-finite values")
        _require((arr >= 0).all(), "cost map contains negative values")
        self.values = arr

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class OcclusionMask:
    """Boolean per-pixel mask; True marks occluded/invalid pixels."""

    flags: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.flags)
        _require(arr.ndim == 2, "mask must be HxW")
        _require(arr.shape[0] > 0 and arr.shape[1] > 0, "non-positive dimensions")
        self.flags = np.ascontiguousarray(arr != 0)

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def width(self) -> int:
        return self.flags.shape[1]
