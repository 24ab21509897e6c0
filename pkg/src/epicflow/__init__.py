"""Edge-aware sparse-to-dense optical flow interpolation and refinement.

Dense flow is estimated in three stages: prune a sparse match set,
interpolate it densely with an edge-aware geodesic distance (kernel-mean
or locally-weighted affine estimates), and refine the result with a
one-level variational solver. An evaluation harness provides endpoint
error metrics, color renderings, and match-quality sensitivity sweeps.
"""

from .edges import (
    SmoothnessWeights,
    external_cost_map,
    gradient_cost_map,
    smoothness_weights,
)
from .evaluation import EvalReport, evaluate, flow_to_color, sensitivity_sweep
from .fileio import (
    read_cost_map,
    read_flo,
    read_image,
    read_mask,
    read_matches,
    write_flo,
    write_matches,
    write_pnm,
)
from .geodesic import (
    DistanceMap,
    Labeling,
    MatchGraph,
    build_match_graph,
    exact_geodesic_map,
    graph_distances,
    grid_edge_weight,
    knn_matches,
    label_assignment,
)
from .interpolation import (
    AffineParams,
    DegenerateAffineFit,
    InterpConfig,
    InterpResult,
    interpolate,
    la_estimate,
    nw_estimate,
)
from .match_prep import (
    SynthSpec,
    consistency_filter,
    saliency_filter,
    structure_tensor_min_eig,
    synthesize_matches,
)
from .model import (
    CostMap,
    EmptyMatchError,
    FlowField,
    FormatError,
    Image,
    MatchSet,
    NumericalBlowupError,
    OcclusionMask,
)
from .pipeline import Diagnostics, PipelineConfig, epicflow
from .variational import VarParams, energy, refine, warp_image

__version__ = "0.1.0"

__all__ = [
    "AffineParams",
    "CostMap",
    "DegenerateAffineFit",
    "Diagnostics",
    "DistanceMap",
    "EmptyMatchError",
    "EvalReport",
    "FlowField",
    "FormatError",
    "Image",
    "InterpConfig",
    "InterpResult",
    "Labeling",
    "MatchGraph",
    "MatchSet",
    "NumericalBlowupError",
    "OcclusionMask",
    "PipelineConfig",
    "SmoothnessWeights",
    "SynthSpec",
    "VarParams",
    "build_match_graph",
    "consistency_filter",
    "energy",
    "epicflow",
    "evaluate",
    "exact_geodesic_map",
    "external_cost_map",
    "flow_to_color",
    "gradient_cost_map",
    "graph_distances",
    "grid_edge_weight",
    "interpolate",
    "knn_matches",
    "la_estimate",
    "label_assignment",
    "nw_estimate",
    "read_cost_map",
    "read_flo",
    "read_image",
    "read_mask",
    "read_matches",
    "refine",
    "saliency_filter",
    "sensitivity_sweep",
    "smoothness_weights",
    "structure_tensor_min_eig",
    "synthesize_matches",
    "warp_image",
    "write_flo",
    "write_matches",
    "write_pnm",
]
