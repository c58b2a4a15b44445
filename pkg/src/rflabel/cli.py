"""Command-line entry point: simulate, annotate, evaluate, ablate."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline, profiles, registration, rf, seqio, simulator
from .config import PipelineConfig
from .errors import InputError, ParseError, PipelineError
from .geometry import CameraIntrinsics, PointCloud, RigidTransform

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PIPELINE = 3

_EPILOG = "exit codes: 0 success, 2 input/schema error, 3 pipeline failure"


# ---------------------------------------------------------------------------
# config parsing


def _load_json_doc(path):
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"{path}: no such file")
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON: {e.msg} (line {e.lineno})")
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    return doc


def _check_keys(d, allowed, what):
    unknown = set(d) - set(allowed)
    if unknown:
        raise InputError(f"unknown {what} keys: {sorted(unknown)}")


def _parse_scene(d, seed_override=None):
    _check_keys(d, {"arrangement", "n_objects", "seed", "table_height", "objects"}, "scene")
    if "objects" in d:
        objects = []
        for o in d["objects"]:
            _check_keys(o, {"id", "epc", "shape", "position", "quaternion", "yaw",
                            "tag_point", "tag_normal"}, "object")
            if "quaternion" in o:
                q = np.asarray(o["quaternion"], dtype=float)
            else:
                yaw = float(o.get("yaw", 0.0))
                q = np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])
            objects.append(simulator.ObjectSpec(
                object_id=int(o["id"]), epc=o["epc"], shape=o["shape"],
                pose=RigidTransform(q, np.asarray(o["position"], dtype=float)),
                tag_point=np.asarray(o.get("tag_point", [0, 0, 0]), dtype=float),
                tag_normal=np.asarray(o.get("tag_normal", [0, 0, 1]), dtype=float),
            ))
        return simulator.SceneSpec(objects=objects,
                                   arrangement=d.get("arrangement", simulator.FREE),
                                   table_height=float(d.get("table_height", 0.0)))
    seed = int(d.get("seed", 0)) if seed_override is None else seed_override
    return simulator.make_scene(
        d.get("arrangement", simulator.FREE),
        n_objects=int(d.get("n_objects", 4)),
        seed=seed,
        table_height=float(d.get("table_height", 0.0)),
    )


def _parse_traj(d):
    allowed = {f for f in simulator.TrajectorySpec.__dataclass_fields__}
    _check_keys(d, allowed, "trajectory")
    kwargs = dict(d)
    if "center" in kwargs:
        kwargs["center"] = np.asarray(kwargs["center"], dtype=float)
    return simulator.TrajectorySpec(**kwargs)


def _parse_noise(d, seed_override=None):
    allowed = {f for f in simulator.NoiseSpec.__dataclass_fields__}
    _check_keys(d, allowed, "noise")
    kwargs = dict(d)
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return simulator.NoiseSpec(**kwargs)


def _parse_capture(d):
    allowed = {"width", "height", "fx", "fy", "cx", "cy", "wavelength", "reader_modulus",
               "offset_position", "offset_quaternion", "cull_m"}
    _check_keys(d, allowed, "capture")
    k = CameraIntrinsics(
        fx=float(d.get("fx", 600.0)), fy=float(d.get("fy", 600.0)),
        cx=float(d.get("cx", (int(d.get("width", 640)) - 1) / 2.0)),
        cy=float(d.get("cy", (int(d.get("height", 480)) - 1) / 2.0)),
        width=int(d.get("width", 640)), height=int(d.get("height", 480)),
    )
    params = rf.RfParams(wavelength=float(d.get("wavelength", 0.3263)),
                         reader_modulus=float(d.get("reader_modulus", 180.0)))
    offset = RigidTransform(
        np.asarray(d.get("offset_quaternion", [1, 0, 0, 0]), dtype=float),
        np.asarray(d.get("offset_position", [0.05, 0.0, 0.0]), dtype=float),
    )
    return k, params, offset, float(d.get("cull_m", 1.5))


def _simulate_from_doc(doc, seed_override=None):
    _check_keys(doc, {"scene", "trajectory", "noise", "capture"}, "simulation config")
    scene = _parse_scene(doc.get("scene", {}), seed_override)
    traj = _parse_traj(doc.get("trajectory", {}))
    noise = _parse_noise(doc.get("noise", {}), seed_override)
    k, params, offset, cull = _parse_capture(doc.get("capture", {}))
    return simulator.simulate(scene, traj, noise, intrinsics=k, params=params,
                              offset=offset, cull_m=cull)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    doc = _load_json_doc(args.config)
    seq = _simulate_from_doc(doc, args.seed)
    seqio.write_sequence(seq, args.out)
    print(f"wrote {seq.num_frames} frames to {args.out}")
    return EXIT_OK


def _dump_profiles_csv(path, seq, result, config):
    inst_dps = {
        inst.instance_id: profiles.diff(
            profiles.instance_profile(inst.cloud.centroid, seq.poses, seq.offset))
        for inst in result.scene.instances
    }
    tag_dps = {}
    for t in seq.tags:
        if int(t.present.sum()) >= 2:
            tag_dps[t.epc] = profiles.tag_profile(t, seq.params, max_gap=config.max_gap)
    with open(path, "w") as f:
        cols = ["t"]
        cols += [f"dSx_{i}" for i in inst_dps]
        cols += [f"dSy_{epc}" for epc in tag_dps]
        cols += ["w"]
        f.write(",".join(cols) + "\n")
        n = len(result.weights.w)
        for t in range(n):
            row = [str(t)]
            row += [f"{dp.deltas[t]:.6g}" if dp.present[t] else "" for dp in inst_dps.values()]
            row += [f"{dp.deltas[t]:.6g}" if dp.present[t] else "" for dp in tag_dps.values()]
            row.append(f"{result.weights.w[t]:g}")
            f.write(",".join(row) + "\n")


def cmd_annotate(args):
    config = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    seq = seqio.read_sequence(args.seq)
    result = pipeline.annotate(seq, config, use_weighting=not args.no_weighting)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seqio.write_labeled_masks(
        out,
        [(lf.timestamp, lf.pixels) for lf in result.labeled_frames],
        {i: result.epc_by_instance[i] for i in result.epc_by_instance},
    )
    seqio.write_assignment(out / "assignment.json", result.assignment)
    seqio.write_instances(out / "instances.json", result.scene)
    if args.dump_profiles:
        _dump_profiles_csv(args.dump_profiles, seq, result, config)
    print(f"registered {len(result.scene.instances)} instances, "
          f"matched {len(result.assignment.pairs)} tags")
    return EXIT_OK


def cmd_evaluate(args):
    config = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    seq = seqio.read_sequence(args.gt)
    if seq.gt is None:
        raise InputError(f"{args.gt}: sequence has no gt/ subtree")
    pred_frames, pred_table = seqio.read_labeled_masks(args.pred)
    if len(pred_frames) != seq.num_frames:
        raise InputError(
            f"prediction has {len(pred_frames)} frames, sequence has {seq.num_frames}")

    # scene-level scores from the saved registration + assignment
    instances_doc = json.loads((Path(args.pred) / "instances.json").read_text())
    assignment_doc = json.loads((Path(args.pred) / "assignment.json").read_text())
    scene = registration.SceneMap()
    for rec in instances_doc:
        scene.instances.append(registration.RegisteredInstance(
            instance_id=rec["instance"],
            cloud=PointCloud(np.asarray(rec["points"]), frame="world"),
            frames_seen=rec["frames_seen"],
        ))
    from .matching import Assignment, matching_precision
    assignment = Assignment(
        pairs=[(p["instance"], p["epc"], p["score"]) for p in assignment_doc["pairs"]],
        unmatched_instances=assignment_doc["unmatched_instances"],
        unmatched_tags=assignment_doc["unmatched_tags"],
    )
    reg_cfg = registration.RegistrationConfig(
        chamfer_threshold=config.chamfer_threshold,
        prune_fraction=config.prune_fraction, voxel=config.voxel)
    gt_clouds = pipeline.gt_object_clouds(seq, config)
    recall = registration.recall_of(scene, gt_clouds, reg_cfg)
    inst_to_obj = registration.correspond(scene, gt_clouds, config.chamfer_threshold)
    precision = matching_precision(assignment, inst_to_obj, seq.gt.instance_to_epc)

    from . import evaluation
    gt_frames = pipeline.gt_labeled_frames(seq)
    pred = [(pix, pred_table) for pix in pred_frames]
    fm = evaluation.sequence_metrics(pred, gt_frames, boundary_tol_px=config.boundary_tol_px,
                                     sample_stride=config.sample_stride)

    report = {
        "scene": {"instance_recall": recall, "matching_precision": precision},
        "frame": {
            "mask": {"f": fm.mask_f, "p": fm.mask_p, "r": fm.mask_r},
            "boundary": {"f": fm.boundary_f, "p": fm.boundary_p, "r": fm.boundary_r},
            "recall_at": {str(k): v for k, v in fm.recall_at.items()},
        },
    }
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n")

    print("scene level")
    print(f"  instance recall     {recall:.2f}")
    print(f"  matching precision  {precision:.2f}")
    print("frame level            F     P     R")
    print(f"  mask overlap      {fm.mask_f:.2f}  {fm.mask_p:.2f}  {fm.mask_r:.2f}")
    print(f"  boundary overlap  {fm.boundary_f:.2f}  {fm.boundary_p:.2f}  {fm.boundary_r:.2f}")
    for tau, v in fm.recall_at.items():
        print(f"  recall@{tau:.2f}       {v:.2f}")
    return EXIT_OK


def run_condition(doc, seeds, config):
    """simulate + annotate + evaluate one suite condition across seeds.

    Returns per-seed metric dicts for both weighting modes.
    """
    rows = {"with": [], "without": []}
    for seed in seeds:
        seq = _simulate_from_doc(doc, int(seed))
        for mode, use_w in (("with", True), ("without", False)):
            try:
                result = pipeline.annotate(seq, config, use_weighting=use_w)
                recall, precision = pipeline.scene_scores(seq, result, config)
                fm = pipeline.evaluate_frames(seq, result, config)
                rows[mode].append({
                    "seed": int(seed),
                    "instance_recall": recall,
                    "matching_precision": precision,
                    "mask_f": fm.mask_f,
                })
            except PipelineError:
                rows[mode].append({
                    "seed": int(seed),
                    "instance_recall": 0.0,
                    "matching_precision": 0.0,
                    "mask_f": 0.0,
                })
    return rows


def cmd_ablate(args):
    suite = _load_json_doc(args.suite)
    _check_keys(suite, {"seeds", "conditions", "config"}, "suite")
    seeds = suite.get("seeds", list(range(20)))
    if isinstance(seeds, dict):
        _check_keys(seeds, {"count", "start"}, "seeds")
        seeds = list(range(int(seeds.get("start", 0)),
                           int(seeds.get("start", 0)) + int(seeds["count"])))
    if len(seeds) < 2:
        raise InputError("suite needs at least 2 seeds")
    config = PipelineConfig.from_dict(suite.get("config", {}))
    conditions = suite.get("conditions")
    if not conditions:
        raise InputError("suite has no conditions")

    out = {"seeds": [int(s) for s in seeds], "conditions": {}}
    for cond in conditions:
        _check_keys(cond, {"name", "scene", "trajectory", "noise", "capture"}, "condition")
        name = cond.get("name", "condition")
        doc = {k: v for k, v in cond.items() if k != "name"}
        rows = run_condition(doc, seeds, config)
        means = {}
        for mode in ("with", "without"):
            n = len(rows[mode])
            means[mode] = {
                key: sum(r[key] for r in rows[mode]) / n
                for key in ("instance_recall", "matching_precision", "mask_f")
            }
        paired = {
            key: means["with"][key] - means["without"][key]
            for key in ("instance_recall", "matching_precision", "mask_f")
        }
        out["conditions"][name] = {"runs": rows, "means": means, "paired_difference": paired}
        print(f"{name}: precision {means['with']['matching_precision']:.3f} (with w) vs "
              f"{means['without']['matching_precision']:.3f} (without); "
              f"mask F diff {paired['mask_f']:+.3f}")
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="rflabel", epilog=_EPILOG,
                                     description="RF-tag driven pixelwise annotation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", epilog=_EPILOG, help="generate a synthetic sequence")
    p.add_argument("--config", required=True, help="scene/trajectory/noise JSON")
    p.add_argument("--out", required=True, help="output sequence directory")
    p.add_argument("--seed", type=int, default=None, help="override scene and noise seeds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("annotate", epilog=_EPILOG, help="annotate a sequence directory")
    p.add_argument("--seq", required=True, help="input sequence directory")
    p.add_argument("--out", required=True, help="output directory for labeled masks")
    p.add_argument("--no-weighting", action="store_true",
                   help="disable the discriminativeness weighting (ablation)")
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument("--dump-profiles", default=None, metavar="FILE",
                   help="write differential profiles and weights as CSV")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("evaluate", epilog=_EPILOG, help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="annotation output directory")
    p.add_argument("--gt", required=True, help="sequence directory with gt/ subtree")
    p.add_argument("--report", default=None, help="write JSON report here")
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", epilog=_EPILOG,
                       help="seeded with/without-weighting comparison suite")
    p.add_argument("--suite", required=True, help="suite JSON")
    p.add_argument("--out", required=True, help="output JSON table")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except PipelineError as e:
        print(f"pipeline failure: {e}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
