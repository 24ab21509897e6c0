"""Command-line entry points: epicflow, epicflow-eval, epicflow-sweep.

Exit codes: 0 success, 2 input-format error, 3 all matches pruned,
4 numeric blow-up.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import fileio
from .evaluation import evaluate, flow_to_color, sensitivity_sweep
from .interpolation import InterpConfig
from .model import EmptyMatchError, FormatError, NumericalBlowupError, OcclusionMask
from .pipeline import PipelineConfig, epicflow
from .variational import VarParams

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_EMPTY = 3
EXIT_BLOWUP = 4


def _threshold_or_off(text):
    if str(text).lower() == "off":
        return None
    return float(text)


def _float_list(text):
    values = [float(tok) for tok in str(text).split(",") if tok.strip()]
    if not values:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    return values


def _int_list(text):
    values = [int(tok) for tok in str(text).split(",") if tok.strip()]
    if not values:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers")
    return values


def _add_config_args(parser):
    parser.add_argument("--interp", choices=["la", "nw"], default="la",
                        help="estimator: locally-weighted affine or kernel mean")
    parser.add_argument("--k", type=int, default=None,
                        help="neighborhood size (default 100 for la, 25 for nw)")
    parser.add_argument("--a", type=float, default=1.0, help="kernel coefficient")
    parser.add_argument("--la-lambda", type=float, default=1e-3,
                        help="affine-fit regularization toward the translation estimate")
    parser.add_argument("--distance", choices=["approx", "exact", "euclidean", "mixed"],
                        default="approx", help="neighbor distance mode")
    parser.add_argument("--match-scale", type=float, default=1.0,
                        help="multiply all match coordinates by this factor")
    parser.add_argument("--prune-saliency", type=_threshold_or_off, default="1e-4",
                        metavar="REAL|off", help="structure-tensor threshold, or 'off'")
    parser.add_argument("--prune-consistency", type=_threshold_or_off, default="5",
                        metavar="REAL|off", help="residual threshold in px, or 'off'")
    parser.add_argument("--no-variational", action="store_true",
                        help="stop after interpolation")
    parser.add_argument("--fp-iters", type=int, default=5)
    parser.add_argument("--sor-iters", type=int, default=30)
    parser.add_argument("--sor-omega", type=float, default=1.6)
    parser.add_argument("--kappa", type=float, default=5.0)


def _build_config(args, cost_map=None):
    interp = InterpConfig(
        estimator=args.interp,
        distance_mode=args.distance,
        kernel_a=args.a,
        k_neighbors=args.k,
        la_regularization=args.la_lambda,
    )
    var = VarParams(
        fp_iters=args.fp_iters,
        sor_iters=args.sor_iters,
        sor_omega=args.sor_omega,
        kappa=args.kappa,
    )
    return PipelineConfig(
        interp=interp,
        var=var,
        saliency_threshold=args.prune_saliency,
        consistency_residual=args.prune_consistency,
        match_scale=args.match_scale,
        cost_map=cost_map,
        skip_variational=args.no_variational,
    )


def _load_cost_map(args, shape):
    if args.edges is None:
        return None
    cost_map, clamped = fileio.read_cost_map(args.edges, expect_shape=shape)
    if clamped:
        print(f"warning: clamped {clamped} negative cost values to 0", file=sys.stderr)
    return cost_map


def main_epicflow(argv=None):
    parser = argparse.ArgumentParser(
        prog="epicflow",
        description="Dense optical flow from sparse matches by edge-aware "
                    "geodesic interpolation plus variational refinement.",
    )
    parser.add_argument("image1")
    parser.add_argument("image2")
    parser.add_argument("--matches", required=True, help="match file (x1 y1 x2 y2 per line)")
    parser.add_argument("--out", required=True, help="output .flo path")
    parser.add_argument("--edges", default=None,
                        help="edge map (PGM or Pf float map); omit to use the image gradient")
    parser.add_argument("--edges-mode", choices=["gradient"], default="gradient",
                        help="built-in edge source when --edges is not given")
    _add_config_args(parser)
    parser.add_argument("--dump-interp", default=None, metavar="PATH.flo",
                        help="also write the pre-refinement interpolated field")
    parser.add_argument("--dump-labels", default=None, metavar="PATH.pgm",
                        help="write the geodesic cell labeling")
    parser.add_argument("--viz", default=None, metavar="PATH.ppm",
                        help="write a color rendering of the final flow")
    parser.add_argument("--timings", action="store_true", help="print per-stage timings")
    args = parser.parse_args(argv)

    image1 = fileio.read_image(args.image1)
    image2 = fileio.read_image(args.image2)
    matches, _ = fileio.read_matches(args.matches)
    cost_map = _load_cost_map(args, image1.data.shape[:2])
    config = _build_config(args, cost_map)
    if args.dump_interp is not None:
        config.keep_interpolation = True
    if args.dump_labels is not None:
        config.keep_labeling = True

    flow, diag = epicflow(image1, image2, matches, config)
    fileio.write_flo(flow, args.out)
    if args.dump_interp is not None and diag.interpolated is not None:
        fileio.write_flo(diag.interpolated, args.dump_interp)
    if args.dump_labels is not None:
        if diag.labeling is None:
            print("warning: no labeling available for this distance mode", file=sys.stderr)
        else:
            fileio.write_label_map(diag.labeling.labels, args.dump_labels)
    if args.viz is not None:
        fileio.write_pnm(flow_to_color(flow).data, args.viz)
    if args.timings:
        for stage in ("edges", "pruning", "interpolation", "variational", "total"):
            print(f"{stage:>14s}: {diag.timings[stage]:8.3f} s")
    print(
        f"matches: {diag.matches_in} in, {diag.matches_after_saliency} after saliency, "
        f"{diag.matches_after_consistency} after consistency"
    )
    return EXIT_OK


def main_eval(argv=None):
    parser = argparse.ArgumentParser(
        prog="epicflow-eval", description="Compare an estimated .flo against ground truth.")
    parser.add_argument("est")
    parser.add_argument("gt")
    parser.add_argument("--valid", default=None,
                        help="PGM mask; nonzero pixels are treated as invalid")
    parser.add_argument("--occ", default=None,
                        help="PGM mask; nonzero pixels are occluded")
    parser.add_argument("--json", action="store_true", help="emit the report as JSON")
    parser.add_argument("--viz", default=None, metavar="PATH.ppm",
                        help="write a color rendering of the estimate")
    args = parser.parse_args(argv)

    est, _ = fileio.read_flo(args.est)
    gt, gt_valid = fileio.read_flo(args.gt)
    shape = gt.vectors.shape[:2]
    if est.vectors.shape[:2] != shape:
        raise FormatError("estimate and ground-truth dimensions disagree")
    if args.valid is not None:
        invalid = fileio.read_mask(args.valid, expect_shape=shape)
        gt_valid = gt_valid & ~invalid.flags
    occ = fileio.read_mask(args.occ, expect_shape=shape) if args.occ else None

    report = evaluate(est, gt, gt_valid, occ)
    if args.viz is not None:
        fileio.write_pnm(flow_to_color(est).data, args.viz)
    if args.json:
        print(json.dumps(report.as_dict(), indent=2))
    else:
        for key, value in report.as_dict().items():
            print(f"{key:>10s}: {'-' if value is None else value}")
    return EXIT_OK


def main_sweep(argv=None):
    parser = argparse.ArgumentParser(
        prog="epicflow-sweep",
        description="Pipeline AEE over a grid of synthetic match densities "
                    "and corruption levels (saliency pruning disabled).",
    )
    parser.add_argument("image1")
    parser.add_argument("image2")
    parser.add_argument("gt", help="ground-truth .flo")
    parser.add_argument("--occ", default=None, help="occlusion mask PGM")
    parser.add_argument("--edges", default=None, help="edge map (PGM or Pf)")
    parser.add_argument("--densities", type=_float_list, default=[0.01, 0.05, 0.2])
    parser.add_argument("--corruptions", type=_float_list, default=[0.0, 0.1, 0.3])
    parser.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    parser.add_argument("--csv", default=None, help="per-seed CSV output path")
    parser.add_argument("--agg-csv", default=None, help="aggregated CSV output path")
    _add_config_args(parser)
    args = parser.parse_args(argv)

    image1 = fileio.read_image(args.image1)
    image2 = fileio.read_image(args.image2)
    gt, gt_valid = fileio.read_flo(args.gt)
    shape = gt.vectors.shape[:2]
    if args.occ is not None:
        occ = fileio.read_mask(args.occ, expect_shape=shape)
    else:
        occ = OcclusionMask(np.zeros(shape, dtype=bool))
    cost_map = _load_cost_map(args, shape)
    config = _build_config(args, cost_map)

    _, aggregated = sensitivity_sweep(
        image1, image2, gt, gt_valid, occ,
        args.densities, args.corruptions, args.seeds, config,
        csv_path=args.csv, agg_csv_path=args.agg_csv,
    )
    print("density,corruption,aee")
    for density, corruption, aee in aggregated:
        print(f"{density:g},{corruption:g},{aee:.4f}")
    return EXIT_OK


def _dispatch(entry, argv):
    try:
        return entry(argv)
    except (FormatError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except EmptyMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


def run_epicflow():
    sys.exit(_dispatch(main_epicflow, None))


def run_eval():
    sys.exit(_dispatch(main_eval, None))


def run_sweep():
    sys.exit(_dispatch(main_sweep, None))
