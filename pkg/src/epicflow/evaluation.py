"""Flow metrics, color rendering, and match-quality sensitivity sweeps."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .match_prep import SynthSpec, synthesize_matches
from .model import EmptyMatchError, FlowField, Image, NumericalBlowupError, OcclusionMask
from .pipeline import PipelineConfig, epicflow

OUTLIER_PX = 3.0
BIN_EDGES = (10.0, 40.0)


@dataclass
class EvalReport:
    """Endpoint-error statistics over the valid pixels.

    aee_s0_10 / aee_s10_40 / aee_s40plus bin the error by ground-truth
    magnitude ([0,10), [10,40), [40,inf)); empty bins report 0 with
    population 0 so the weighted bin mean recombines to `aee`.
    Occlusion-dependent fields are None when no mask is supplied.
    """

    aee: float
    aee_s0_10: float
    aee_s10_40: float
    aee_s40plus: float
    out_all_3: float
    n_valid: int
    n_s0_10: int
    n_s10_40: int
    n_s40plus: int
    aee_occ: float | None = None
    out_noc_3: float | None = None

    def as_dict(self):
        return {
            "aee": self.aee,
            "aee_occ": self.aee_occ,
            "aee_s0_10": self.aee_s0_10,
            "aee_s10_40": self.aee_s10_40,
            "aee_s40plus": self.aee_s40plus,
            "out_noc_3": self.out_noc_3,
            "out_all_3": self.out_all_3,
            "n_valid": self.n_valid,
        }


def evaluate(est: FlowField, gt: FlowField, gt_valid=None, occ: OcclusionMask | None = None) -> EvalReport:
    """Endpoint-error report of an estimate against ground truth.

    `gt_valid` masks pixels with known ground truth (default: all).
    When an occlusion mask is given, aee_occ averages over valid
    occluded pixels and out_noc_3 counts outliers over valid
    non-occluded pixels.
    """
    if est.vectors.shape != gt.vectors.shape:
        raise ValueError("flow dimensions disagree")
    h, w = gt.vectors.shape[:2]
    if gt_valid is None:
        valid = np.ones((h, w), dtype=bool)
    else:
        valid = np.asarray(gt_valid) != 0
        if valid.shape != (h, w):
            raise ValueError("validity mask dimensions disagree")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("no valid pixels to evaluate")

    diff = est.vectors - gt.vectors
    ee = np.hypot(diff[:, :, 0], diff[:, :, 1])
    mag = np.hypot(gt.vectors[:, :, 0], gt.vectors[:, :, 1])

    ee_valid = ee[valid]
    mag_valid = mag[valid]
    bins = [
        mag_valid < BIN_EDGES[0],
        (mag_valid >= BIN_EDGES[0]) & (mag_valid < BIN_EDGES[1]),
        mag_valid >= BIN_EDGES[1],
    ]
    bin_aee = [float(ee_valid[b].mean()) if b.any() else 0.0 for b in bins]
    bin_n = [int(b.sum()) for b in bins]

    aee_occ = None
    out_noc = None
    if occ is not None:
        if occ.flags.shape != (h, w):
            raise ValueError("occlusion mask dimensions disagree")
        occluded = valid & occ.flags
        visible = valid & ~occ.flags
        if occluded.any():
            aee_occ = float(ee[occluded].mean())
        if visible.any():
            out_noc = float((ee[visible] > OUTLIER_PX).mean())

    return EvalReport(
        aee=float(ee_valid.mean()),
        aee_s0_10=bin_aee[0],
        aee_s10_40=bin_aee[1],
        aee_s40plus=bin_aee[2],
        out_all_3=float((ee_valid > OUTLIER_PX).mean()),
        n_valid=n_valid,
        n_s0_10=bin_n[0],
        n_s10_40=bin_n[1],
        n_s40plus=bin_n[2],
        aee_occ=aee_occ,
        out_noc_3=out_noc,
    )


def _hsv_to_rgb(hue, sat, val):
    """Vectorized HSV -> RGB, all components in [0, 1]."""
    k = (hue * 6.0) % 6.0
    i = np.floor(k).astype(int) % 6
    f = k - np.floor(k)
    p = val * (1.0 - sat)
    q = val * (1.0 - f * sat)
    t = val * (1.0 - (1.0 - f) * sat)
    r = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [val, q, p, p, t, val])
    g = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [t, val, val, q, p, p])
    b = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [p, p, t, val, val, q])
    return np.stack([r, g, b], axis=-1)


def flow_to_color(flow: FlowField, max_norm: float | None = None) -> Image:
    """Color-wheel rendering: hue encodes direction, saturation magnitude.

    Zero flow renders white. `max_norm` defaults to the 99th percentile
    of the flow magnitudes; magnitudes at or above it saturate fully.
    """
    u = flow.vectors[:, :, 0]
    v = flow.vectors[:, :, 1]
    mag = np.hypot(u, v)
    if max_norm is None:
        max_norm = float(np.percentile(mag, 99.0))
    if max_norm <= 0:
        max_norm = 1.0
    hue = (np.arctan2(v, u) / (2.0 * np.pi)) % 1.0
    sat = np.clip(mag / max_norm, 0.0, 1.0)
    val = np.ones_like(sat)
    return Image(_hsv_to_rgb(hue, sat, val))


def sensitivity_sweep(image1: Image, image2: Image, gt: FlowField, gt_valid, occ: OcclusionMask,
                      densities, corruptions, seeds, config: PipelineConfig | None = None,
                      csv_path=None, agg_csv_path=None):
    """Pipeline quality over a grid of synthetic match densities and
    corruption levels.

    For every (density, corruption, seed) cell: synthesize matches from
    the ground truth (occluded or invalid pixels excluded), run the
    pipeline with saliency pruning off, and record the AEE over valid
    pixels. Failed cells record NaN instead of aborting the sweep.

    Returns (rows, aggregated): per-seed tuples
    (density, corruption, seed, aee) and per-cell tuples
    (density, corruption, mean_aee). Optional CSV outputs mirror the two
    lists with headers `density,corruption,seed,aee` and
    `density,corruption,aee`.
    """
    if not densities or not corruptions or not seeds:
        raise ValueError("densities, corruptions and seeds must be non-empty")
    config = config if config is not None else PipelineConfig()
    config = replace(config, saliency_threshold=None)
    if gt_valid is None:
        gt_valid = np.ones(gt.vectors.shape[:2], dtype=bool)
    excluded = OcclusionMask(occ.flags | ~np.asarray(gt_valid, dtype=bool))

    rows = []
    aggregated = []
    for density in densities:
        for corruption in corruptions:
            cell = []
            for seed in seeds:
                try:
                    matches = synthesize_matches(
                        gt, excluded, SynthSpec(density, corruption, seed))
                    flow, _ = epicflow(image1, image2, matches, config)
                    aee = evaluate(flow, gt, gt_valid, occ).aee
                except (EmptyMatchError, NumericalBlowupError, ValueError):
                    aee = float("nan")
                rows.append((float(density), float(corruption), int(seed), aee))
                cell.append(aee)
            finite = [a for a in cell if np.isfinite(a)]
            aggregated.append((
                float(density), float(corruption),
                float(np.mean(finite)) if finite else float("nan"),
            ))

    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["density", "corruption", "seed", "aee"])
            writer.writerows(rows)
    if agg_csv_path is not None:
        with open(agg_csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["density", "corruption", "aee"])
            writer.writerows(aggregated)
    return rows, aggregated
