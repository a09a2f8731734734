#!/usr/bin/env python3
"""
Stereo depth spoofing lab: command-line entry point.

Subcommands:
  predict   - closed-form fake depths for an attack geometry (or the expected table)
  render    - synthesize a stereo pair, optionally with an injected attack
  match     - run a stereo matcher on a PPM pair
  analyze   - look for a fake-depth blob in a depth PFM
  attack    - render -> match -> analyze in one go
  sim       - run a flight-simulator scenario
  sweep     - attack fidelity over a d x z x mode x algorithm grid

Exit codes: 0 ran, 1 I/O failure, 2 usage or parse error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from spoof_config import HAS_REPORTS, LOG_FORMAT, LOG_LEVEL, SWEEP_WORKERS, output_dir
from errors import ImageFormatError, StereoSpoofError
from geometry import AttackGeometry, Mode, Pattern, StereoRig, predict_fake_depth, round_to_oa_step
from spoof_constants import (
    DEFAULT_BASELINE_M,
    DEFAULT_BLOCK_SIZE,
    DEFAULT_FLAT_DEPTH_M,
    DEFAULT_FOCAL_LENGTH_PX,
    DEFAULT_IMAGE_HEIGHT_PX,
    DEFAULT_IMAGE_WIDTH_PX,
    DEFAULT_INTENSITY_PRIMARY,
    DEFAULT_INTENSITY_SECONDARY,
    DEFAULT_LR_CONSISTENCY_PX,
    DEFAULT_PIXEL_PITCH_M,
    DEFAULT_SEPARATION_M,
    DEFAULT_UNIQUENESS_RATIO,
    MAX_AMBIENT_LUX,
    OA_DEPTH_STEP_M,
    SGM_P1,
    SGM_P2,
)
import analysis
import depth
import flightsim
import image_io
import render

logger = logging.getLogger("stereospoof")

if HAS_REPORTS:
    from report_generator import generate_attack_pdf, generate_sim_pdf


# ── Argument groups ──────────────────────────────────────────────────────

def _add_rig_args(p):
    g = p.add_argument_group("stereo rig")
    g.add_argument("--f", type=float, default=DEFAULT_FOCAL_LENGTH_PX, help="focal length (px)")
    g.add_argument("--b", type=float, default=DEFAULT_BASELINE_M, help="baseline (m)")
    g.add_argument("--width", type=int, default=DEFAULT_IMAGE_WIDTH_PX, help="image width (px)")
    g.add_argument("--height", type=int, default=DEFAULT_IMAGE_HEIGHT_PX, help="image height (px)")
    g.add_argument("--pitch", type=float, default=DEFAULT_PIXEL_PITCH_M, help="pixel pitch (m/px)")


def _add_attack_args(p, pattern="x", mode="beams"):
    g = p.add_argument_group("attack geometry")
    g.add_argument("--d", type=float, default=DEFAULT_SEPARATION_M, help="light source separation (m)")
    g.add_argument("--z", type=float, default=4.0, help="attack distance from the rig (m)")
    g.add_argument("--offset", type=float, default=0.0, help="lateral offset of the source pair (m)")
    g.add_argument("--pattern", choices=[p.value for p in Pattern], default=pattern, help="attack pattern (-)")
    g.add_argument("--mode", choices=[m.value for m in Mode], default=mode, help="artifact mode (-)")
    g.add_argument("--primary", type=float, default=DEFAULT_INTENSITY_PRIMARY,
                   help="bright glare intensity (fraction of full scale)")
    g.add_argument("--secondary", type=float, default=DEFAULT_INTENSITY_SECONDARY,
                   help="dim glare intensity (fraction of full scale)")


def _add_scene_args(p):
    g = p.add_argument_group("scene")
    g.add_argument("--scene", choices=[b.value for b in render.Background], default="flat",
                   help="background kind (-)")
    g.add_argument("--depth", type=float, default=DEFAULT_FLAT_DEPTH_M, help="flat/wall background depth (m)")
    g.add_argument("--near", type=float, default=3.0, help="corridor near depth (m)")
    g.add_argument("--far", type=float, default=30.0, help="corridor far depth (m)")
    light = g.add_mutually_exclusive_group()
    light.add_argument("--lux", type=float, default=0.0, help=f"ambient light (lux proxy, 0-{MAX_AMBIENT_LUX:g})")
    light.add_argument("--night", action="store_const", dest="lux", const=0.0, help="ambient 0 lux (-)")
    light.add_argument("--day", action="store_const", dest="lux", const=MAX_AMBIENT_LUX,
                       help=f"ambient {MAX_AMBIENT_LUX:g} lux (-)")
    g.add_argument("--no-ae", action="store_true", help="disable auto exposure (-)")


def _add_matcher_args(p):
    g = p.add_argument_group("matcher")
    g.add_argument("--algorithm", choices=[a.value for a in depth.Algorithm], default="bm",
                   help="bm = SAD block matching, sgm = census semi-global (-)")
    g.add_argument("--block", type=int, default=DEFAULT_BLOCK_SIZE, help="SAD block size, odd (px)")
    g.add_argument("--min-disp", type=int, default=None, help="minimum disparity (px)")
    g.add_argument("--max-disp", type=int, default=None, help="maximum disparity (px); automatic if omitted")
    g.add_argument("--p1", type=int, default=SGM_P1, help="SGM penalty for 1 px disparity change (cost units)")
    g.add_argument("--p2", type=int, default=SGM_P2, help="SGM penalty for larger jumps (cost units)")
    g.add_argument("--uniqueness", type=float, default=DEFAULT_UNIQUENESS_RATIO, help="uniqueness ratio (-)")
    g.add_argument("--lr", type=float, default=DEFAULT_LR_CONSISTENCY_PX,
                   help="left-right consistency tolerance (px); negative disables")
    g.add_argument("--no-subpixel", action="store_true", help="disable parabolic refinement (-)")


def _add_output_args(p):
    p.add_argument("--out", default=None, help="output directory (path); default $STEREOSPOOF_OUT or ./out")
    p.add_argument("--seed", type=int, default=0, help="texture / jitter seed (-)")


# ── Builders ─────────────────────────────────────────────────────────────

def _rig(args):
    return StereoRig(args.f, args.b, args.width, args.height, pixel_pitch_m_per_px=args.pitch)


def _geo(args):
    return AttackGeometry(
        separation_m=args.d, distance_m=args.z, lateral_offset_m=args.offset,
        pattern=Pattern(args.pattern), mode=Mode(args.mode),
        intensity_primary=args.primary, intensity_secondary=args.secondary,
    )


def _scene(args):
    kind = render.Background(args.scene)
    if kind == render.Background.CORRIDOR:
        return render.SceneSpec.corridor(args.near, args.far, args.lux, args.seed)
    return render.SceneSpec(kind, args.lux, args.seed, args.depth)


def _matcher(args, rig, geo=None, background_m=None):
    lo, hi = depth.auto_disparity_range(rig, geo, background_m, block_size=args.block)
    return depth.MatcherConfig(
        algorithm=args.algorithm, block_size=args.block,
        min_disp=args.min_disp if args.min_disp is not None else lo,
        max_disp=args.max_disp if args.max_disp is not None else hi,
        sgm_p1=args.p1, sgm_p2=args.p2, uniqueness_ratio=args.uniqueness,
        lr_consistency_px=args.lr if args.lr >= 0 else None,
        subpixel=not args.no_subpixel,
    )


def _out(args):
    path = output_dir(args.out)
    os.makedirs(path, exist_ok=True)
    return path


def _write_depth_outputs(out, disparity, depth_map):
    image_io.write_pfm(os.path.join(out, "disparity.pfm"), disparity.values, ~disparity.valid)
    image_io.write_pfm(os.path.join(out, "depth.pfm"), depth_map.values, ~depth_map.valid)
    image_io.write_ply(os.path.join(out, "cloud.ply"), depth.to_point_cloud(depth_map))


def _write_report(out, report):
    text = analysis.report_to_text(report)
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as f:
        f.write(text)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as f:
        json.dump(analysis.report_to_dict(report), f, indent=2, sort_keys=True)
        f.write("\n")
    return text


# ── Subcommands ──────────────────────────────────────────────────────────

def cmd_predict(args):
    rig = _rig(args)
    if args.table:
        distances = [float(z) for z in range(1, args.z_max + 1)]
        rows = analysis.expected_table(rig, args.d, distances, args.step)
        analysis.write_table_csv(rows, sys.stdout, analysis.TABLE_COLUMNS)
        return 0

    geo = _geo(args)
    print("source,depth_m,rounded_m,exists,reason")
    for pred in predict_fake_depth(rig, geo):
        rounded = ""
        if pred.depth_m > 0 and np.isfinite(pred.depth_m):
            rounded = f"{round_to_oa_step(pred.depth_m, args.step):g}"
        print(f"{pred.source.value},{pred.depth_m:.4f},{rounded},{str(pred.exists).lower()},{pred.reason.value}")
    return 0


def cmd_render(args):
    rig, scene, out = _rig(args), _scene(args), _out(args)
    geo = None if args.clean else _geo(args)
    exposure = render.AutoExposure(enabled=not args.no_ae)
    frame, layout = render.render_attack(rig, scene, geo, exposure, args.seed)
    image_io.write_ppm(os.path.join(out, "left.ppm"), frame.left)
    image_io.write_ppm(os.path.join(out, "right.ppm"), frame.right)
    image_io.write_pgm(os.path.join(out, "left.pgm"), depth.to_gray(frame.left))
    image_io.write_pgm(os.path.join(out, "right.pgm"), depth.to_gray(frame.right))
    print(f"exposure_gain={frame.exposure_gain:.6f}")
    print(f"orb_green_peak={render.orb_green_peak(frame, layout)}")
    logger.info(f"Rendered pair into {out}")
    return 0


def cmd_match(args):
    rig, out = _rig(args), _out(args)
    left = image_io.read_ppm(args.left)
    right = image_io.read_ppm(args.right)
    frame = render.StereoFrame(left, right, left.shape[1], left.shape[0])
    cfg = _matcher(args, rig)
    disparity = depth.match(frame, cfg)
    depth_map = depth.to_depth(disparity, rig)
    _write_depth_outputs(out, disparity, depth_map)
    print(f"valid_pixels={disparity.valid_count}")
    return 0


def cmd_analyze(args):
    rig, out = _rig(args), _out(args)
    values = image_io.read_pfm(args.depth_pfm).astype(np.float64)
    valid = np.isfinite(values) & (values > 0)
    depth_map = depth.DepthMap(np.where(valid, values, depth.INVALID), valid, rig)
    report = analysis.detect_fake_depth(depth_map, args.background)
    print(_write_report(out, report), end="")
    if args.left and args.right:
        left, right = image_io.read_ppm(args.left), image_io.read_ppm(args.right)
        sat = analysis.detect_saturation(render.StereoFrame(left, right, left.shape[1], left.shape[0]))
        print(f"saturation_verdict={sat.verdict.value}")
        print(f"saturation_fraction={sat.flagged_fraction:.6f}")
    return 0


def cmd_attack(args):
    rig, scene, out = _rig(args), _scene(args), _out(args)
    geo = None if args.clean else _geo(args)
    cfg = _matcher(args, rig, geo, scene.reference_depth())
    run = analysis.run_attack_pipeline(rig, geo, scene, cfg, exposure=render.AutoExposure(enabled=not args.no_ae),
                                       seed=args.seed)
    image_io.write_ppm(os.path.join(out, "left.ppm"), run.frame.left)
    image_io.write_ppm(os.path.join(out, "right.ppm"), run.frame.right)
    _write_depth_outputs(out, run.disparity, run.depth)
    print(_write_report(out, run.report), end="")
    print(f"saturation_verdict={run.saturation.verdict.value}")

    if args.pdf:
        if HAS_REPORTS:
            generate_attack_pdf(run, rig, geo, os.path.join(out, "report.pdf"))
        else:
            logger.warning("PDF report requested but matplotlib/fpdf2 are unavailable")
    return 0


def cmd_sim(args):
    out = _out(args)
    sc = flightsim.load_scenario(args.scenario, args.period, args.duration)
    traj = flightsim.run_scenario(sc)
    with open(os.path.join(out, "trajectory.csv"), "w", encoding="utf-8", newline="") as f:
        flightsim.write_trajectory_csv(traj, f)
    summary = flightsim.summarize(traj)
    for key, value in summary.items():
        print(f"{key}={_summary_value(value)}")

    if args.pdf:
        if HAS_REPORTS:
            baseline = flightsim.run_scenario(replace(sc, schedule=flightsim.InjectionSchedule()))
            generate_sim_pdf(traj, summary, os.path.join(out, "trajectory.pdf"), baseline)
        else:
            logger.warning("PDF report requested but matplotlib/fpdf2 are unavailable")
    return 0


def _summary_value(value):
    if value is None:
        return "none"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def cmd_sweep(args):
    rig, out = _rig(args), _out(args)
    zs = range(args.z_min, args.z_max + 1)
    rows = analysis.run_sweep(rig, args.ds, zs, args.modes, args.algorithms,
                              args.workers or SWEEP_WORKERS, args.seed)
    analysis.write_table_csv(rows, os.path.join(out, "sweep.csv"))
    passed = sum(r["passed"] for r in rows)
    print(f"cells={len(rows)}")
    print(f"passed={passed}")
    print(f"pass_rate={passed / len(rows):.4f}" if rows else "pass_rate=none")
    return 0


# ── Parser ───────────────────────────────────────────────────────────────

def build_parser():
    parser = argparse.ArgumentParser(prog="stereospoof", description="Stereo depth spoofing lab")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging (-)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="closed-form fake depths")
    _add_rig_args(p)
    _add_attack_args(p, pattern="triangle", mode="combined")
    p.add_argument("--step", type=float, default=OA_DEPTH_STEP_M, help="OA rounding step (m)")
    p.add_argument("--table", action="store_true", help="print the expected-depth table as CSV (-)")
    p.add_argument("--z-max", type=int, default=16, help="last attack distance of the table (m)")
    p.add_argument("--seed", type=int, default=0, help="accepted for a uniform CLI; predictions are closed-form (-)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("render", help="synthesize a stereo pair")
    _add_rig_args(p)
    _add_attack_args(p)
    _add_scene_args(p)
    _add_output_args(p)
    p.add_argument("--clean", action="store_true", help="render without an attack (-)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("match", help="stereo-match a PPM pair")
    p.add_argument("--left", required=True, help="left image (PPM path)")
    p.add_argument("--right", required=True, help="right image (PPM path)")
    _add_rig_args(p)
    _add_matcher_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("analyze", help="detect a fake-depth blob in a depth PFM")
    p.add_argument("depth_pfm", help="depth map (PFM path)")
    p.add_argument("--background", type=float, required=True, help="true background depth (m)")
    p.add_argument("--left", default=None, help="left image for the saturation check (PPM path)")
    p.add_argument("--right", default=None, help="right image for the saturation check (PPM path)")
    _add_rig_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("attack", help="render, match and analyze")
    _add_rig_args(p)
    _add_attack_args(p)
    _add_scene_args(p)
    _add_matcher_args(p)
    _add_output_args(p)
    p.add_argument("--clean", action="store_true", help="run without an attack (-)")
    p.add_argument("--pdf", action="store_true", help="also write report.pdf (-)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sim", help="run a flight scenario")
    p.add_argument("scenario", help=f"scenario JSON (path) or built-in name: {', '.join(flightsim.BUILTIN_SCENARIOS)}")
    p.add_argument("--period", type=float, default=None, help="shaking period for built-ins (s)")
    p.add_argument("--duration", type=float, default=None, help="override scenario duration (s)")
    p.add_argument("--pdf", action="store_true", help="also write trajectory.pdf (-)")
    _add_output_args(p)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("sweep", help="attack fidelity grid")
    _add_rig_args(p)
    _add_output_args(p)
    p.add_argument("--ds", type=float, nargs="+", default=[0.5, 1.0, 2.0], help="source separations (m)")
    p.add_argument("--z-min", type=int, default=2, help="first attack distance (m)")
    p.add_argument("--z-max", type=int, default=9, help="last attack distance (m)")
    p.add_argument("--modes", nargs="+", choices=[Mode.BEAMS.value, Mode.ORBS.value],
                   default=[Mode.BEAMS.value, Mode.ORBS.value], help="artifact modes (-)")
    p.add_argument("--algorithms", nargs="+", choices=[a.value for a in depth.Algorithm],
                   default=[a.value for a in depth.Algorithm], help="matchers (-)")
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes (count)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else getattr(logging, LOG_LEVEL, logging.INFO)
    logging.basicConfig(format=LOG_FORMAT, level=level, stream=sys.stderr)

    try:
        return args.func(args)
    except ImageFormatError as e:
        logger.error(f"Could not read input: {e}")
        return 1
    except StereoSpoofError as e:
        logger.error(str(e))
        return 2
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
