"""On-disk sequence format.

A sequence directory looks like:

    meta.json            intrinsics, RF parameters, antenna offset, rate,
                         frame count, cull distance, EPC roster
    frames/NNNNNN.depth.pgm   16-bit binary PGM (P5, maxval 65535,
                              big-endian), depth in millimeters, 0 = missing
    frames/NNNNNN.mask.pgm    8-bit binary PGM (P5, maxval 255), instance ids
    poses.jsonl          one record per frame: {"t","frame","position","quaternion"}
    tags.jsonl           one record per successful read: {"t","frame","epc","phase_deg"};
                         a missing record is a missing read
    gt/                  optional ground truth: masks/NNNNNN.pgm,
                         instance_to_epc.json, distances.jsonl

Serialization is byte-deterministic: fixed key order, compact separators,
shortest round-trip float formatting.  write -> read -> write reproduces the
files byte for byte.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from . import rf, simulator
from .errors import ParseError
from .geometry import (
    CameraIntrinsics,
    DepthFrame,
    InstanceMaskFrame,
    Pose,
    RigidTransform,
)

_META_KEYS = [
    "width", "height", "fx", "fy", "cx", "cy",
    "wavelength", "reader_modulus",
    "offset_position", "offset_quaternion",
    "rate", "frames", "cull_m", "epcs",
]

_PGM_HEADER = re.compile(rb"^P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"))


def _floats(a):
    return [float(x) for x in np.asarray(a)]


# ---------------------------------------------------------------------------
# PGM


def write_pgm(path: Path, pixels: np.ndarray, maxval: int):
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode()
    path.write_bytes(header + pixels.astype(dtype).tobytes())


def read_pgm(path: Path, expect_maxval: int, expect_shape=None) -> np.ndarray:
    data = path.read_bytes()
    m = _PGM_HEADER.match(data)
    if not m:
        raise ParseError("not a binary PGM (bad magic or header)", path=path, offset=0)
    w, h, maxval = int(m.group(1)), int(m.group(2)), int(m.group(3))
    if maxval != expect_maxval:
        raise ParseError(f"maxval {maxval}, expected {expect_maxval}", path=path, offset=m.end(3))
    if expect_shape is not None and (h, w) != expect_shape:
        raise ParseError(f"dimensions {w}x{h} do not match meta", path=path, offset=3)
    dtype = np.dtype(">u2") if expect_maxval > 255 else np.dtype("u1")
    body = data[m.end():]
    expected = w * h * dtype.itemsize
    if len(body) != expected:
        raise ParseError(
            f"pixel payload is {len(body)} bytes, expected {expected}", path=path, offset=m.end()
        )
    return np.frombuffer(body, dtype=dtype).reshape(h, w).astype(
        np.uint16 if expect_maxval > 255 else np.uint8
    )


# ---------------------------------------------------------------------------
# sequence write


def write_sequence(seq: simulator.Sequence, out_dir) -> Path:
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    k = seq.intrinsics
    meta = {
        "width": k.width, "height": k.height,
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "wavelength": seq.params.wavelength,
        "reader_modulus": seq.params.reader_modulus,
        "offset_position": _floats(seq.offset.translation),
        "offset_quaternion": _floats(seq.offset.rotation),
        "rate": seq.rate,
        "frames": seq.num_frames,
        "cull_m": seq.cull_m,
        "epcs": [t.epc for t in seq.tags],
    }
    (out / "meta.json").write_text(_dumps(meta) + "\n")

    for i, (d, m) in enumerate(zip(seq.depth_frames, seq.mask_frames)):
        write_pgm(out / "frames" / f"{i:06d}.depth.pgm", d.pixels, 65535)
        write_pgm(out / "frames" / f"{i:06d}.mask.pgm", m.pixels, 255)

    with open(out / "poses.jsonl", "w") as f:
        for i, p in enumerate(seq.poses):
            f.write(_dumps({
                "t": float(p.timestamp), "frame": i,
                "position": _floats(p.translation),
                "quaternion": _floats(p.rotation),
            }) + "\n")

    with open(out / "tags.jsonl", "w") as f:
        for i in range(seq.num_frames):
            for track in seq.tags:
                if track.present[i]:
                    f.write(_dumps({
                        "t": float(seq.poses[i].timestamp), "frame": i,
                        "epc": track.epc, "phase_deg": float(track.phase[i]),
                    }) + "\n")

    if seq.gt is not None:
        gt_dir = out / "gt"
        (gt_dir / "masks").mkdir(parents=True, exist_ok=True)
        for i, m in enumerate(seq.gt.true_masks):
            write_pgm(gt_dir / "masks" / f"{i:06d}.pgm", m.pixels, 255)
        mapping = {str(oid): epc for oid, epc in sorted(seq.gt.instance_to_epc.items())}
        (gt_dir / "instance_to_epc.json").write_text(_dumps(mapping) + "\n")
        with open(gt_dir / "distances.jsonl", "w") as f:
            for i in range(seq.num_frames):
                for track in seq.tags:
                    f.write(_dumps({
                        "t": float(seq.poses[i].timestamp), "frame": i,
                        "epc": track.epc,
                        "distance_m": float(seq.gt.distances[track.epc][i]),
                    }) + "\n")
    return out


# ---------------------------------------------------------------------------
# sequence read


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ParseError("file missing", path=path)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", path=path, line=e.lineno)


def _jsonl_records(path: Path, required_keys):
    if not path.exists():
        raise ParseError("file missing", path=path)
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", path=path, line=lineno)
            missing = required_keys - rec.keys()
            if missing:
                raise ParseError(f"missing keys {sorted(missing)}", path=path, line=lineno)
            out.append((lineno, rec))
    return out


def read_sequence(seq_dir) -> simulator.Sequence:
    root = Path(seq_dir)
    meta_path = root / "meta.json"
    meta = _load_json(meta_path)
    if set(meta.keys()) != set(_META_KEYS):
        extra = sorted(set(meta.keys()) - set(_META_KEYS))
        missing = sorted(set(_META_KEYS) - set(meta.keys()))
        raise ParseError(f"meta keys mismatch (extra {extra}, missing {missing})", path=meta_path)

    k = CameraIntrinsics(fx=meta["fx"], fy=meta["fy"], cx=meta["cx"], cy=meta["cy"],
                         width=int(meta["width"]), height=int(meta["height"]))
    params = rf.RfParams(wavelength=meta["wavelength"], reader_modulus=meta["reader_modulus"])
    oq = np.asarray(meta["offset_quaternion"], dtype=float)
    if abs(np.linalg.norm(oq) - 1.0) > 1e-6:
        raise ParseError("offset quaternion is not unit", path=meta_path)
    if abs(np.linalg.norm(oq) - 1.0) > 1e-9:
        oq = oq / np.linalg.norm(oq)
    offset = RigidTransform(oq, np.asarray(meta["offset_position"], dtype=float))
    t_count = int(meta["frames"])
    epcs = list(meta["epcs"])
    shape = (k.height, k.width)

    frames_dir = root / "frames"
    present_idx = set()
    for p in frames_dir.glob("*.depth.pgm"):
        present_idx.add(int(p.name.split(".")[0]))
    if present_idx and (min(present_idx) != 0 or max(present_idx) != len(present_idx) - 1):
        gaps = sorted(set(range(max(present_idx) + 1)) - present_idx)
        raise ParseError(f"frame index gap at {gaps[:3]}", path=frames_dir)
    if len(present_idx) != t_count:
        raise ParseError(f"{len(present_idx)} depth frames on disk, meta says {t_count}",
                         path=frames_dir)

    pose_records = _jsonl_records(root / "poses.jsonl", {"t", "frame", "position", "quaternion"})
    if len(pose_records) != t_count:
        raise ParseError(f"{len(pose_records)} pose records, meta says {t_count}",
                         path=root / "poses.jsonl")
    poses = []
    for lineno, rec in pose_records:
        if rec["frame"] != len(poses):
            raise ParseError(f"pose frame {rec['frame']} out of order", path=root / "poses.jsonl",
                             line=lineno)
        q = np.asarray(rec["quaternion"], dtype=float)
        err = abs(np.linalg.norm(q) - 1.0)
        if err > 1e-6:
            raise ParseError(f"non-unit quaternion (norm error {err:.2e})",
                             path=root / "poses.jsonl", line=lineno)
        if err > 1e-9:
            q = q / np.linalg.norm(q)
        poses.append(Pose(q, np.asarray(rec["position"], dtype=float), timestamp=rec["t"]))

    depth_frames, mask_frames = [], []
    for i in range(t_count):
        d = read_pgm(frames_dir / f"{i:06d}.depth.pgm", 65535, shape)
        m = read_pgm(frames_dir / f"{i:06d}.mask.pgm", 255, shape)
        depth_frames.append(DepthFrame(poses[i].timestamp, d))
        mask_frames.append(InstanceMaskFrame(poses[i].timestamp, m))

    tags_path = root / "tags.jsonl"
    phase = {epc: np.zeros(t_count) for epc in epcs}
    present = {epc: np.zeros(t_count, dtype=bool) for epc in epcs}
    for lineno, rec in _jsonl_records(tags_path, {"t", "frame", "epc", "phase_deg"}):
        epc, frame = rec["epc"], rec["frame"]
        if epc not in phase:
            raise ParseError(f"unknown EPC {epc!r}", path=tags_path, line=lineno)
        if not (0 <= frame < t_count):
            raise ParseError(f"frame {frame} out of range", path=tags_path, line=lineno)
        if present[epc][frame]:
            raise ParseError(f"duplicate read for ({frame}, {epc!r})", path=tags_path, line=lineno)
        if not (0.0 <= rec["phase_deg"] < params.reader_modulus):
            raise ParseError(f"phase {rec['phase_deg']} outside [0, {params.reader_modulus})",
                             path=tags_path, line=lineno)
        phase[epc][frame] = rec["phase_deg"]
        present[epc][frame] = True
    tags = [rf.TagTrack(epc=epc, phase=phase[epc], present=present[epc]) for epc in epcs]

    gt = None
    gt_dir = root / "gt"
    if gt_dir.exists():
        mapping = _load_json(gt_dir / "instance_to_epc.json")
        instance_to_epc = {int(oid): epc for oid, epc in mapping.items()}
        true_masks = [
            InstanceMaskFrame(poses[i].timestamp, read_pgm(gt_dir / "masks" / f"{i:06d}.pgm", 255, shape))
            for i in range(t_count)
        ]
        distances = {epc: np.zeros(t_count) for epc in epcs}
        for lineno, rec in _jsonl_records(gt_dir / "distances.jsonl",
                                          {"t", "frame", "epc", "distance_m"}):
            distances[rec["epc"]][rec["frame"]] = rec["distance_m"]
        gt = simulator.GroundTruth(instance_to_epc=instance_to_epc, true_masks=true_masks,
                                   distances=distances)

    return simulator.Sequence(
        intrinsics=k, params=params, offset=offset, rate=meta["rate"], cull_m=meta["cull_m"],
        depth_frames=depth_frames, mask_frames=mask_frames, poses=poses, tags=tags, gt=gt,
    )


# ---------------------------------------------------------------------------
# annotation output


def write_labeled_masks(out_dir, labeled_frames, label_table):
    """labeled_frames: list of (timestamp, id grid); label_table: id -> epc."""
    out = Path(out_dir)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    for i, (_, pixels) in enumerate(labeled_frames):
        write_pgm(out / "labels" / f"{i:06d}.pgm", pixels, 255)
    (out / "labels.json").write_text(
        _dumps({str(i): epc for i, epc in sorted(label_table.items())}) + "\n"
    )


def read_labeled_masks(in_dir):
    root = Path(in_dir)
    table = {int(i): epc for i, epc in _load_json(root / "labels.json").items()}
    files = sorted((root / "labels").glob("*.pgm"))
    frames = [read_pgm(p, 255) for p in files]
    return frames, table


def write_assignment(path, assignment):
    rec = {
        "pairs": [
            {"instance": int(i), "epc": epc, "score": float(s)} for i, epc, s in assignment.pairs
        ],
        "unmatched_instances": [int(i) for i in assignment.unmatched_instances],
        "unmatched_tags": list(assignment.unmatched_tags),
    }
    Path(path).write_text(_dumps(rec) + "\n")


def write_instances(path, scene):
    rec = [
        {
            "instance": inst.instance_id,
            "frames_seen": inst.frames_seen,
            "points": [[float(x) for x in p] for p in inst.cloud.points],
        }
        for inst in scene.instances
    ]
    Path(path).write_text(_dumps(rec) + "\n")


def sequences_equal(a: simulator.Sequence, b: simulator.Sequence) -> bool:
    """Exact observable equality of two in-memory sequences."""
    if a.num_frames != b.num_frames or a.rate != b.rate or a.cull_m != b.cull_m:
        return False
    if a.intrinsics != b.intrinsics:
        return False
    if a.params != b.params:
        return False
    if not (np.array_equal(a.offset.rotation, b.offset.rotation)
            and np.array_equal(a.offset.translation, b.offset.translation)):
        return False
    for pa, pb in zip(a.poses, b.poses):
        if pa.timestamp != pb.timestamp:
            return False
        if not (np.array_equal(pa.rotation, pb.rotation)
                and np.array_equal(pa.translation, pb.translation)):
            return False
    for da, db in zip(a.depth_frames, b.depth_frames):
        if not np.array_equal(da.pixels, db.pixels):
            return False
    for ma, mb in zip(a.mask_frames, b.mask_frames):
        if not np.array_equal(ma.pixels, mb.pixels):
            return False
    if [t.epc for t in a.tags] != [t.epc for t in b.tags]:
        return False
    for ta, tb in zip(a.tags, b.tags):
        if not np.array_equal(ta.present, tb.present):
            return False
        if not np.array_equal(ta.phase[ta.present], tb.phase[tb.present]):
            return False
    if (a.gt is None) != (b.gt is None):
        return False
    if a.gt is not None:
        if a.gt.instance_to_epc != b.gt.instance_to_epc:
            return False
        for ma, mb in zip(a.gt.true_masks, b.gt.true_masks):
            if not np.array_equal(ma.pixels, mb.pixels):
                return False
        for epc in a.gt.distances:
            if not np.array_equal(a.gt.distances[epc], b.gt.distances[epc]):
                return False
    return True
