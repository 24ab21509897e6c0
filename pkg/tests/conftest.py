import numpy as np
import pytest


@pytest.fixture(scope="session", autouse=True)
def _warm_jit_kernels():
    """Compile the numba kernels once so timed checks measure steady state."""
    from epicflow import (
        CostMap,
        FlowField,
        Image,
        InterpConfig,
        MatchSet,
        VarParams,
        interpolate,
        refine,
        warp_image,
    )

    cm = CostMap(np.zeros((4, 4)))
    ms = MatchSet([[0.0, 0.0, 1.0, 0.0], [3.0, 3.0, 3.0, 2.0]])
    for mode in ("approx", "exact", "euclidean", "mixed"):
        interpolate((4, 4), cm, ms, InterpConfig("nw", mode, k_neighbors=2))
    img = Image(np.linspace(0.0, 1.0, 16).reshape(4, 4))
    zero = FlowField(np.zeros((4, 4, 2)))
    warp_image(img, zero)
    refine(img, img, zero, VarParams(fp_iters=1, sor_iters=2))
