"""
Fake-depth detection, expected-depth tables and the over-saturation defense.
"""

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage

from depth import MatcherConfig, auto_disparity_range, match, prediction_disparity_range, to_depth
from geometry import (
    AttackGeometry,
    ImagePoint,
    Mode,
    Pattern,
    Source,
    StereoRig,
    feasible_predictions,
    predict_fake_depth,
    round_to_oa_step,
)
from render import AutoExposure, SceneSpec, render_attack
from spoof_constants import (
    DEVIATION_FRAC,
    MIN_BLOB_AREA_PX,
    OA_DEPTH_STEP_M,
    OA_THRESHOLD_M,
    PREDICTION_GATE_FRAC,
    SATURATION_FRAC_THRESHOLD,
    SATURATION_LEVEL,
    SWEEP_PASS_REL_ERROR,
)

logger = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

REPORT_SCHEMA = {
    "detected": "bool",
    "blob_center_u": "float | null (px, relative to principal point)",
    "blob_center_v": "float | null (px, relative to principal point)",
    "blob_area_px": "int",
    "measured_depth_m": "float | null",
    "predicted": "object | null {source, depth_m, exists, reason}",
    "relative_error": "float | null",
    "success": "bool",
}

TABLE_COLUMNS = ["distance_m", "x_raw_m", "x_expected_m", "trapezoid_raw_m", "trapezoid_expected_m"]


class Verdict(str, Enum):
    CLEAN = "Clean"
    SUSPECT = "Suspect"


@dataclass(frozen=True)
class AnalysisConfig:
    deviation_frac: float = DEVIATION_FRAC
    min_blob_area_px: int = MIN_BLOB_AREA_PX
    oa_threshold_m: float = OA_THRESHOLD_M
    # None keeps every deviating pixel; a fraction keeps only pixels whose
    # disparity is within that fraction of the predicted fake disparity.
    prediction_gate_frac: float = None


@dataclass
class FakeDepthReport:
    detected: bool = False
    blob_center: ImagePoint = None
    blob_area_px: int = 0
    measured_depth_m: float = math.nan
    predicted: object = None
    relative_error: float = math.nan
    success: bool = False


@dataclass
class SaturationReport:
    flagged_mask: tuple
    flagged_fraction: float
    verdict: Verdict
    per_camera: dict = field(default_factory=dict)


# ── Fake-depth detection ─────────────────────────────────────────────────

def _deviating(values, valid, references, frac):
    """Valid pixels whose depth is off by more than `frac` from every reference depth."""
    mask = valid.copy()
    for ref in references:
        ref = np.asarray(ref, dtype=np.float64)
        mask &= np.abs(values - ref) > frac * ref
    return mask


def _near_prediction(values, valid, predicted_m, frac):
    """Disparity ratio test: f*b/Z within frac of f*b/Z_pred is |Z_pred/Z - 1| <= frac."""
    safe = np.where(valid, values, np.inf)
    return valid & (np.abs(predicted_m / safe - 1.0) <= frac)


def detect_fake_depth(depth, background_depth_m, cfg=None, predicted=None):
    """Largest 8-connected blob of pixels that deviate from the background depth.

    `background_depth_m` is a scalar, a per-pixel array, or a sequence of those;
    a pixel only counts when it deviates from all of them.
    """
    cfg = cfg or AnalysisConfig()
    if isinstance(background_depth_m, (list, tuple)):
        references = background_depth_m
    else:
        references = [background_depth_m]

    report = FakeDepthReport(predicted=predicted)
    mask = _deviating(depth.values, depth.valid, references, cfg.deviation_frac)
    if cfg.prediction_gate_frac is not None and predicted is not None and predicted.exists:
        mask &= _near_prediction(depth.values, depth.valid, predicted.depth_m, cfg.prediction_gate_frac)
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        logger.debug("No deviating pixels")
        return report

    areas = np.bincount(labels.ravel())[1:]
    biggest = int(np.argmax(areas)) + 1
    area = int(areas[biggest - 1])
    if area < cfg.min_blob_area_px:
        logger.debug(f"Largest deviating blob is {area} px, below {cfg.min_blob_area_px}")
        report.blob_area_px = area
        return report

    rows, cols = np.nonzero(labels == biggest)
    measured = float(np.median(depth.values[rows, cols]))
    rig = depth.rig
    report.detected = True
    report.blob_area_px = area
    report.blob_center = ImagePoint(float(cols.mean()) - rig.cx, float(rows.mean()) - rig.cy)
    report.measured_depth_m = measured
    report.success = measured < cfg.oa_threshold_m
    if predicted is not None and predicted.exists and math.isfinite(predicted.depth_m):
        report.relative_error = abs(measured - predicted.depth_m) / predicted.depth_m
    logger.info(f"Fake-depth blob: {area} px, median {measured:.3f} m, success={report.success}")
    return report


# ── Expected table ───────────────────────────────────────────────────────

def expected_table(rig, d, distances, step=OA_DEPTH_STEP_M):
    """Expected fake depth per attack distance, rounded to the OA step.

    X column uses the beams X formula. The trapezoid column takes whichever
    trapezoid formula is feasible (beams when b > d, orbs when d > b).
    Exact half-step ties go down here: the published column puts the z = 7
    tie (0.75 m) in the 0.5 m band.
    """
    rows = []
    for z in distances:
        geo = AttackGeometry(separation_m=d, distance_m=z, pattern=Pattern.TRIANGLE, mode=Mode.COMBINED)
        preds = {p.source: p for p in predict_fake_depth(rig, geo)}
        x_raw = preds[Source.BEAMS_X].depth_m
        trap = [p for p in (preds[Source.BEAMS_TRAPEZOID], preds[Source.ORBS_TRAPEZOID]) if p.exists]
        trap_raw = trap[0].depth_m if trap else None
        rows.append({
            "distance_m": z,
            "x_raw_m": x_raw,
            "x_expected_m": round_to_oa_step(x_raw, step, ties_up=False),
            "trapezoid_raw_m": trap_raw,
            "trapezoid_expected_m": round_to_oa_step(abs(trap_raw), step, ties_up=False) if trap_raw else None,
        })
    return rows


def write_table_csv(rows, path_or_file, columns=None):
    """Write dict rows as CSV. Accepts a path or an open text file."""
    columns = columns or (list(rows[0].keys()) if rows else TABLE_COLUMNS)

    def _fmt(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:g}"
        return value

    def _write(f):
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in columns})

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as f:
            _write(f)


# ── Saturation defense ───────────────────────────────────────────────────

def detect_saturation(frame, sat_level=SATURATION_LEVEL, frac_threshold=SATURATION_FRAC_THRESHOLD):
    """Flag pixels with every channel >= sat_level; Suspect when either camera exceeds the threshold."""
    masks = tuple(np.all(img >= sat_level, axis=2) for img in (frame.left, frame.right))
    fractions = {cam: float(m.mean()) for cam, m in zip(("left", "right"), masks)}
    worst = max(fractions.values())
    verdict = Verdict.SUSPECT if worst > frac_threshold else Verdict.CLEAN
    logger.debug(f"Saturation: left {fractions['left']:.5f}, right {fractions['right']:.5f} -> {verdict.value}")
    return SaturationReport(masks, worst, verdict, fractions)


# ── Report serialization ─────────────────────────────────────────────────

def _num(value):
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return None
    return value


def report_to_dict(report):
    center = report.blob_center
    return {
        "detected": bool(report.detected),
        "blob_center_u": center.u if center else None,
        "blob_center_v": center.v if center else None,
        "blob_area_px": int(report.blob_area_px),
        "measured_depth_m": _num(report.measured_depth_m),
        "predicted": report.predicted.to_dict() if report.predicted else None,
        "relative_error": _num(report.relative_error),
        "success": bool(report.success),
    }


def report_to_text(report):
    """key=value lines, one per field; nested prediction fields are prefixed with predicted_."""
    data = report_to_dict(report)
    predicted = data.pop("predicted") or {}
    lines = []
    for key, value in data.items():
        lines.append(f"{key}={_text(value)}")
    for key in ("source", "depth_m", "exists", "reason"):
        lines.append(f"predicted_{key}={_text(predicted.get(key))}")
    return "\n".join(lines) + "\n"


def _text(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


# ── End-to-end pipeline ──────────────────────────────────────────────────

@dataclass
class AttackRun:
    frame: object
    layout: object
    disparity: object
    depth: object
    report: FakeDepthReport
    saturation: SaturationReport
    matcher: MatcherConfig


def run_attack_pipeline(rig, geo=None, scene=None, matcher_cfg=None, analysis_cfg=None,
                        exposure=None, seed=0):
    """render -> match -> analyze. `geo=None` runs the clean scene."""
    scene = scene or SceneSpec.flat_textured(seed)
    exposure = exposure or AutoExposure()
    frame, layout = render_attack(rig, scene, geo, exposure, seed)

    if matcher_cfg is None:
        lo, hi = auto_disparity_range(rig, geo, scene.reference_depth())
        matcher_cfg = MatcherConfig(min_disp=lo, max_disp=hi)
    disparity = match(frame, matcher_cfg)
    depth_map = to_depth(disparity, rig)

    predictions = predict_fake_depth(rig, geo) if geo is not None else []
    feasible = feasible_predictions(predictions)
    predicted = feasible[0] if feasible else (predictions[0] if predictions else None)

    scene_depth = np.repeat(scene.row_depths(rig.image_height_px)[:, None], rig.image_width_px, axis=1)
    references = [scene_depth] if geo is None else [scene_depth, geo.distance_m]
    analysis_cfg = analysis_cfg or AnalysisConfig(prediction_gate_frac=PREDICTION_GATE_FRAC)
    report = detect_fake_depth(depth_map, references, analysis_cfg, predicted)
    saturation = detect_saturation(frame)
    return AttackRun(frame, layout, disparity, depth_map, report, saturation, matcher_cfg)


def evaluate_attack(rig, geo, scene=None, matcher_cfg=None, analysis_cfg=None, seed=0):
    return run_attack_pipeline(rig, geo, scene, matcher_cfg, analysis_cfg, seed=seed).report


# ── Sweep ────────────────────────────────────────────────────────────────

def sweep_cell(cell):
    """One grid point; module-level so a process pool can pickle it."""
    mode, algorithm, d, z, rig_dict, seed = cell
    rig = StereoRig.from_dict(rig_dict)
    pattern = Pattern.XSHAPE if mode == Mode.BEAMS.value else Pattern.TRAPEZOID
    geo = AttackGeometry(separation_m=d, distance_m=z, pattern=pattern, mode=Mode(mode))

    feasible = feasible_predictions(predict_fake_depth(rig, geo))
    window = prediction_disparity_range(rig, geo)
    if window is None:
        report = FakeDepthReport(predicted=feasible[0] if feasible else None)
    else:
        cfg = MatcherConfig(algorithm=algorithm, min_disp=window[0], max_disp=window[1])
        report = evaluate_attack(rig, geo, SceneSpec.flat_textured(seed), cfg, seed=seed)

    pred = report.predicted
    exists = bool(pred and pred.exists)
    rel = report.relative_error
    passed = (exists and report.detected and rel <= SWEEP_PASS_REL_ERROR) or (not exists and not report.detected)
    return {
        "mode": mode, "algorithm": algorithm, "d_m": d, "z_m": z, "pattern": pattern.value,
        "predicted_m": pred.depth_m if pred else None, "exists": exists,
        "disp_min": window[0] if window else None, "disp_max": window[1] if window else None,
        "detected": report.detected,
        "measured_m": report.measured_depth_m if report.detected else None,
        "relative_error": rel if report.detected and exists else None,
        "passed": bool(passed),
    }


def run_sweep(rig, ds, zs, modes, algorithms, workers=None, seed=0):
    """Evaluate every (mode, algorithm, d, z) cell; rows come back sorted by that key."""
    cells = [
        (mode, algorithm, float(d), float(z), rig.to_dict(), seed)
        for mode in modes for algorithm in algorithms for d in ds for z in zs
    ]
    workers = max(1, workers or os.cpu_count() or 1)
    logger.info(f"Sweeping {len(cells)} cells with {workers} worker(s)")
    started = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_cell, cells))
    else:
        rows = [sweep_cell(c) for c in cells]
    rows.sort(key=lambda r: (r["mode"], r["algorithm"], r["d_m"], r["z_m"]))
    passed = sum(r["passed"] for r in rows)
    logger.info(f"Sweep done in {time.perf_counter() - started:.1f} s: {passed}/{len(rows)} passed")
    return rows
