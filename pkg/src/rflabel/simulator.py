"""Synthetic sequence generator: renders instance-segmented depth frames of
box/cylinder tabletop scenes along a camera trajectory, and synthesizes tag
phase readings with configurable corruption.

Stands in for the capture rig (RGB-D camera + tracking camera + RFID reader
antenna on a common mount, synchronized at a fixed rate).  Rendering is
analytic ray-primitive intersection, so true masks and distances are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import rf
from .errors import InputError
from .geometry import (
    CameraIntrinsics,
    DepthFrame,
    InstanceMaskFrame,
    Pose,
    RigidTransform,
    matrix_to_quat,
    quat_to_matrix,
)

DEFAULT_INTRINSICS = CameraIntrinsics(fx=600.0, fy=600.0, cx=319.5, cy=239.5, width=640, height=480)
DEFAULT_OFFSET = RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.05, 0.0, 0.0]))
DEFAULT_CULL_M = 1.5

FREE = "free"
TOUCHING = "touching"
STACKED = "stacked"

_MULTIPATH_EPOCH_END_P = 0.3  # geometric epoch-length parameter


@dataclass(frozen=True)
class ObjectSpec:
    object_id: int
    epc: str
    shape: dict  # {"type": "box", "size": [sx, sy, sz]} or {"type": "cylinder", "radius": r, "height": h}
    pose: RigidTransform  # object-to-world
    tag_point: np.ndarray = field(default_factory=lambda: np.zeros(3))  # object frame
    tag_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.object_id < 1:
            raise InputError("object ids start at 1")
        if self.shape.get("type") not in ("box", "cylinder"):
            raise InputError(f"unknown shape type {self.shape.get('type')!r}")
        object.__setattr__(self, "tag_point", np.asarray(self.tag_point, dtype=float))
        n = np.asarray(self.tag_normal, dtype=float)
        object.__setattr__(self, "tag_normal", n / np.linalg.norm(n))

    @property
    def tag_world(self) -> np.ndarray:
        return self.pose.apply(self.tag_point[None, :])[0]

    @property
    def tag_normal_world(self) -> np.ndarray:
        return self.pose.matrix() @ self.tag_normal


@dataclass(frozen=True)
class SceneSpec:
    objects: list
    arrangement: str = FREE
    table_height: float = 0.0

    def __post_init__(self):
        ids = [o.object_id for o in self.objects]
        epcs = [o.epc for o in self.objects]
        if len(set(ids)) != len(ids):
            raise InputError("object ids must be unique")
        if len(set(epcs)) != len(epcs):
            raise InputError("EPCs must be unique")
        if self.arrangement not in (FREE, TOUCHING, STACKED):
            raise InputError(f"unknown arrangement {self.arrangement!r}")

    @property
    def center(self) -> np.ndarray:
        return np.mean([o.pose.translation for o in self.objects], axis=0)


@dataclass(frozen=True)
class TrajectorySpec:
    """Camera path around the scene, sampled at a fixed rate.

    The parametric form orbits a look-at center: azimuth sweeps between two
    angles (advancing only during a configurable duty fraction of each
    cycle, dwelling otherwise) while the radius bobs sinusoidally.  Dwell
    segments are deliberately radial-only, i.e. non-discriminative motion.
    Alternatively pass explicit ``waypoints`` (piecewise-linear positions).
    """

    duration: float = 13.4
    rate: float = 15.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 0.8
    height: float = 0.45
    azimuth_start_deg: float = -40.0
    azimuth_end_deg: float = 40.0
    radial_amplitude: float = 0.04
    radial_period_s: float = 2.5
    height_amplitude: float = 0.12
    height_cycles: float = 2.0
    sweep_duty: float = 0.6
    cycle_s: float = 4.0
    waypoints: list | None = None
    seed: int = 0

    def __post_init__(self):
        if self.rate <= 0:
            raise InputError("rate must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.rate))


@dataclass(frozen=True)
class NoiseSpec:
    depth_sigma: float = 5.0  # mm
    dropout_prob: float = 0.01
    phase_sigma: float = 5.0  # degrees
    miss_prob_base: float = 0.1
    orientation_miss_gain: float = 0.4
    multipath_prob: float = 0.02
    multipath_phase_sigma: float = 40.0  # degrees
    seg_spurious_prob: float = 0.02
    seg_merge_prob: float = 0.0
    seg_miss_prob: float = 0.02
    boundary_jitter_px: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("dropout_prob", "miss_prob_base", "multipath_prob",
                     "seg_spurious_prob", "seg_merge_prob", "seg_miss_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise InputError(f"{name} must be in [0, 1]")
        for name in ("depth_sigma", "phase_sigma", "multipath_phase_sigma"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")

    @classmethod
    def none(cls, seed: int = 0) -> "NoiseSpec":
        return cls(depth_sigma=0.0, dropout_prob=0.0, phase_sigma=0.0, miss_prob_base=0.0,
                   orientation_miss_gain=0.0, multipath_prob=0.0, multipath_phase_sigma=0.0,
                   seg_spurious_prob=0.0, seg_merge_prob=0.0, seg_miss_prob=0.0,
                   boundary_jitter_px=0, seed=seed)


@dataclass
class GroundTruth:
    instance_to_epc: dict  # object id -> epc
    true_masks: list  # InstanceMaskFrame per frame (object ids)
    distances: dict  # epc -> length-T array of true antenna-to-tag distances


@dataclass
class Sequence:
    intrinsics: CameraIntrinsics
    params: rf.RfParams
    offset: RigidTransform
    rate: float
    cull_m: float
    depth_frames: list
    mask_frames: list  # corrupted masks
    poses: list
    tags: list  # TagTrack
    gt: GroundTruth | None = None

    @property
    def num_frames(self) -> int:
        return len(self.depth_frames)


# ---------------------------------------------------------------------------
# trajectory


def look_at_pose(position, target, timestamp=0.0) -> Pose:
    """Camera pose with +z toward target, +x right, +y down (world z is up)."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, up)
    nr = np.linalg.norm(right)
    if nr < 1e-12:  # looking straight up/down; pick an arbitrary right
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / nr
    down = np.cross(forward, right)
    r = np.column_stack([right, down, forward])
    return Pose(matrix_to_quat(r), position, timestamp=timestamp)


def trajectory_poses(traj: TrajectorySpec) -> list:
    t = np.arange(traj.num_samples) / traj.rate
    if traj.waypoints is not None:
        wp = np.asarray(traj.waypoints, dtype=float)
        if len(wp) < 2:
            raise InputError("need at least 2 waypoints")
        s = np.linspace(0.0, len(wp) - 1.0, traj.num_samples)
        i = np.minimum(s.astype(int), len(wp) - 2)
        frac = (s - i)[:, None]
        positions = wp[i] * (1 - frac) + wp[i + 1] * frac
    else:
        # Azimuth progress advances only during the sweep part of each cycle.
        phase = np.mod(t, traj.cycle_s) / traj.cycle_s
        cycles = np.floor(t / traj.cycle_s)
        prog_in_cycle = np.minimum(phase / traj.sweep_duty, 1.0) if traj.sweep_duty > 0 else np.zeros_like(phase)
        total_cycles = max(traj.duration / traj.cycle_s, 1e-9)
        progress = np.minimum((cycles + prog_in_cycle) / total_cycles, 1.0)
        az = np.radians(
            traj.azimuth_start_deg
            + (traj.azimuth_end_deg - traj.azimuth_start_deg) * progress
        )
        rad = traj.radius + traj.radial_amplitude * np.sin(2 * np.pi * t / traj.radial_period_s)
        # Height varies with sweep progress (frozen during dwells), so dwell
        # motion stays radial-only while sweeps also change elevation.
        hgt = traj.height + traj.height_amplitude * np.sin(
            2 * np.pi * traj.height_cycles * progress
        )
        positions = np.column_stack(
            [
                traj.center[0] + rad * np.cos(az),
                traj.center[1] + rad * np.sin(az),
                traj.center[2] + hgt,
            ]
        )
    return [look_at_pose(p, traj.center, timestamp=ti) for p, ti in zip(positions, t)]


# ---------------------------------------------------------------------------
# rendering


def _ray_dirs(k: CameraIntrinsics) -> np.ndarray:
    us, vs = np.meshgrid(np.arange(k.width), np.arange(k.height))
    return np.stack(
        [(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones((k.height, k.width))], axis=-1
    )


def _intersect_box(origin, dirs, half):
    """Slab test; returns entry depth (inf where missed). origin/dirs in object frame."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t1 = (-half - origin) * inv
    t2 = (half - origin) * inv
    tmin = np.minimum(t1, t2).max(axis=-1)
    tmax = np.maximum(t1, t2).min(axis=-1)
    hit = (tmax >= tmin) & (tmax > 1e-9) & (tmin > 1e-9)
    return np.where(hit, tmin, np.inf)


def _intersect_cylinder(origin, dirs, radius, half_h):
    """Axis-aligned (z) cylinder with caps; returns entry depth."""
    ox, oy, oz = origin
    dx, dy, dz = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    t_best = np.full(dx.shape, np.inf)
    a = dx * dx + dy * dy
    b = 2 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - radius * radius
    disc = b * b - 4 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (-1.0, 1.0):
            ts = (-b + sign * sq) / (2 * a)
            z = oz + ts * dz
            ok = (disc > 0) & (a > 0) & (ts > 1e-9) & (np.abs(z) <= half_h)
            t_best = np.where(ok & (ts < t_best), ts, t_best)
        for cap in (-half_h, half_h):
            ts = (cap - oz) / dz
            x = ox + ts * dx
            y = oy + ts * dy
            ok = (ts > 1e-9) & (x * x + y * y <= radius * radius)
            t_best = np.where(ok & (ts < t_best), ts, t_best)
    return t_best


def render_frame(scene: SceneSpec, pose: Pose, k: CameraIntrinsics, cull_m: float,
                 dirs_cam: np.ndarray | None = None):
    """Render one frame; returns (depth in meters with 0 = missing, id mask).

    The table plane renders as background depth (id 0); pixels beyond the
    cull distance are cleared.
    """
    if dirs_cam is None:
        dirs_cam = _ray_dirs(k)
    r = pose.matrix()
    origin_w = pose.translation
    dirs_w = dirs_cam @ r.T  # unnormalized: ray parameter equals camera z-depth

    depth = np.full((k.height, k.width), np.inf)
    ids = np.zeros((k.height, k.width), dtype=np.uint8)

    dz = dirs_w[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_table = (scene.table_height - origin_w[2]) / dz
    hit = (t_table > 1e-9) & np.isfinite(t_table)
    depth = np.where(hit, t_table, depth)

    for obj in scene.objects:
        r_obj = obj.pose.matrix()
        o_o = r_obj.T @ (origin_w - obj.pose.translation)
        d_o = dirs_w @ r_obj
        if obj.shape["type"] == "box":
            half = np.asarray(obj.shape["size"], dtype=float) / 2.0
            t = _intersect_box(o_o, d_o, half)
        else:
            t = _intersect_cylinder(o_o, d_o, obj.shape["radius"], obj.shape["height"] / 2.0)
        closer = t < depth
        depth = np.where(closer, t, depth)
        ids = np.where(closer, np.uint8(obj.object_id), ids)

    culled = ~np.isfinite(depth) | (depth > cull_m)
    depth = np.where(culled, 0.0, depth)
    ids = np.where(culled, np.uint8(0), ids)
    return depth, ids


# ---------------------------------------------------------------------------
# mask corruption


def _renumber(mask: np.ndarray) -> np.ndarray:
    """Remap ids to a contiguous [1, N) range by first (row-major) occurrence."""
    out = np.zeros_like(mask)
    flat = mask.ravel()
    order = []
    for i in flat[flat > 0]:
        if i not in order:
            order.append(i)
    for new, old in enumerate(order, start=1):
        out[mask == old] = new
    return out


_CROSS = ndimage.generate_binary_structure(2, 1)  # 4-connectivity


def _adjacent_pairs(mask: np.ndarray, ids):
    pairs = []
    for i, a in enumerate(ids):
        da = ndimage.binary_dilation(mask == a, structure=_CROSS)
        for b in ids[i + 1:]:
            if (da & (mask == b)).any():
                pairs.append((a, b))
    return pairs


def corrupt_masks(true_masks, noise: NoiseSpec, seed) -> list:
    """Apply per-frame segmentation-style corruption to exact masks.

    Independently per frame: merge an adjacent instance pair, erase an
    instance, add a spurious blob, jitter boundaries; finally renumber ids
    to [1, N) so ids are not consistent across frames, mimicking a
    per-frame segmentation network.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(len(true_masks))
    out = []
    for frame, child in zip(true_masks, children):
        rng = np.random.default_rng(child)
        m = frame.pixels.copy()
        ids = sorted(int(i) for i in np.unique(m) if i > 0)

        if ids and len(ids) >= 2 and rng.random() < noise.seg_merge_prob:
            pairs = _adjacent_pairs(m, ids)
            if pairs:
                a, b = pairs[rng.integers(len(pairs))]
                m[m == b] = a
                ids = sorted(int(i) for i in np.unique(m) if i > 0)

        if ids and rng.random() < noise.seg_miss_prob:
            victim = ids[rng.integers(len(ids))]
            m[m == victim] = 0
            ids = [i for i in ids if i != victim]

        if rng.random() < noise.seg_spurious_prob:
            h, w = m.shape
            cy, cx = rng.integers(h), rng.integers(w)
            rad = int(rng.integers(3, 9))
            ys, xs = np.ogrid[:h, :w]
            blob = ((ys - cy) ** 2 + (xs - cx) ** 2 <= rad * rad) & (m == 0)
            if blob.any():
                m[blob] = max(ids, default=0) + 1
                ids = sorted(int(i) for i in np.unique(m) if i > 0)

        if noise.boundary_jitter_px > 0 and ids:
            jittered = np.zeros_like(m)
            for i in ids:
                n = int(rng.integers(-noise.boundary_jitter_px, noise.boundary_jitter_px + 1))
                region = m == i
                if n > 0:
                    region = ndimage.binary_dilation(region, structure=_CROSS, iterations=n)
                elif n < 0:
                    shrunk = ndimage.binary_erosion(region, structure=_CROSS, iterations=-n)
                    if shrunk.any():
                        region = shrunk
                jittered = np.where(region & (jittered == 0), i, jittered)
            m = jittered.astype(m.dtype)

        out.append(InstanceMaskFrame(frame.timestamp, _renumber(m)))
    return out


# ---------------------------------------------------------------------------
# simulation


def _tag_track(obj: ObjectSpec, ant_pos: np.ndarray, noise: NoiseSpec,
               params: rf.RfParams, rng) -> tuple:
    """Simulate one tag's reads; returns (TagTrack, true distance series)."""
    tag = obj.tag_world
    vec = ant_pos - tag
    d = np.linalg.norm(vec, axis=1)
    cos_a = (vec / d[:, None]) @ obj.tag_normal_world
    miss_p = np.clip(noise.miss_prob_base + noise.orientation_miss_gain * (1.0 - cos_a), 0.0, 1.0)
    present = rng.random(len(d)) >= miss_p

    phase = rf.phase_from_distance(d, params)
    if noise.phase_sigma > 0:
        phase = phase + rng.normal(0.0, noise.phase_sigma, len(d))
    in_epoch = False
    remaining = 0
    for t in range(len(d)):
        if not in_epoch:
            if noise.multipath_prob > 0 and rng.random() < noise.multipath_prob:
                in_epoch = True
                remaining = int(rng.geometric(_MULTIPATH_EPOCH_END_P))
        if in_epoch:
            phase[t] += rng.normal(0.0, noise.multipath_phase_sigma)
            remaining -= 1
            if remaining <= 0:
                in_epoch = False
    phase = np.mod(phase, params.reader_modulus)
    phase = np.where(present, phase, 0.0)  # absent slots carry no reading
    return rf.TagTrack(epc=obj.epc, phase=phase, present=present), d


def simulate(scene: SceneSpec, traj: TrajectorySpec, noise: NoiseSpec,
             intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
             params: rf.RfParams | None = None,
             offset: RigidTransform = DEFAULT_OFFSET,
             cull_m: float = DEFAULT_CULL_M) -> Sequence:
    """Generate a full synchronized sequence with ground truth.

    Deterministic given the specs and seeds.  Raises InputError if any
    per-sample antenna displacement exceeds the unwrap ambiguity radius.
    """
    params = params or rf.RfParams()
    poses = trajectory_poses(traj)
    t_count = len(poses)
    from .geometry import apply_offset

    ant = np.array([apply_offset(p, offset).translation for p in poses])
    steps = np.linalg.norm(np.diff(ant, axis=0), axis=1)
    bound = params.max_sample_displacement
    bad = np.nonzero(steps >= bound)[0]
    if len(bad):
        raise InputError(
            f"antenna moved {steps[bad[0]]:.4f} m between samples {bad[0]} and "
            f"{bad[0] + 1}, exceeding the unwrap bound {bound:.4f} m"
        )

    ss = np.random.SeedSequence(noise.seed)
    depth_root, mask_ss, tag_root = ss.spawn(3)
    depth_children = depth_root.spawn(t_count)
    tag_children = tag_root.spawn(len(scene.objects))

    dirs_cam = _ray_dirs(intrinsics)
    depth_frames, true_masks = [], []
    for pose, child in zip(poses, depth_children):
        depth_m, ids = render_frame(scene, pose, intrinsics, cull_m, dirs_cam)
        mm = depth_m * 1000.0
        rng = np.random.default_rng(child)
        if noise.depth_sigma > 0:
            noisy = mm + rng.normal(0.0, noise.depth_sigma, mm.shape)
            mm = np.where(mm > 0, np.maximum(noisy, 1.0), 0.0)
        if noise.dropout_prob > 0:
            mm = np.where(rng.random(mm.shape) < noise.dropout_prob, 0.0, mm)
        mm = np.minimum(mm, cull_m * 1000.0)  # keep the cull invariant under noise
        depth_frames.append(DepthFrame(pose.timestamp, np.round(mm).astype(np.uint16)))
        true_masks.append(InstanceMaskFrame(pose.timestamp, ids))

    corrupted = corrupt_masks(true_masks, noise, mask_ss)

    tags, distances = [], {}
    for obj, child in zip(scene.objects, tag_children):
        track, d = _tag_track(obj, ant, noise, params, np.random.default_rng(child))
        tags.append(track)
        distances[obj.epc] = d

    gt = GroundTruth(
        instance_to_epc={o.object_id: o.epc for o in scene.objects},
        true_masks=true_masks,
        distances=distances,
    )
    return Sequence(
        intrinsics=intrinsics,
        params=params,
        offset=offset,
        rate=traj.rate,
        cull_m=cull_m,
        depth_frames=depth_frames,
        mask_frames=corrupted,
        poses=poses,
        tags=tags,
        gt=gt,
    )


# ---------------------------------------------------------------------------
# scene construction helpers


def _box(object_id, epc, size, position, yaw=0.0):
    q = np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])
    return ObjectSpec(
        object_id=object_id,
        epc=epc,
        shape={"type": "box", "size": list(size)},
        pose=RigidTransform(q, np.asarray(position, dtype=float)),
        tag_point=np.array([0.0, 0.0, size[2] / 2.0]),
        tag_normal=np.array([0.0, 0.0, 1.0]),
    )


def _cylinder(object_id, epc, radius, height, position):
    return ObjectSpec(
        object_id=object_id,
        epc=epc,
        shape={"type": "cylinder", "radius": radius, "height": height},
        pose=RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.asarray(position, dtype=float)),
        tag_point=np.array([0.0, 0.0, height / 2.0]),
        tag_normal=np.array([0.0, 0.0, 1.0]),
    )


def make_scene(arrangement: str, n_objects: int = 4, seed: int = 0,
               table_height: float = 0.0) -> SceneSpec:
    """Procedural tabletop scene in one of the three clutter arrangements."""
    arrangement_key = {FREE: 1, TOUCHING: 2, STACKED: 3}.get(arrangement, 0)
    rng = np.random.default_rng(np.random.SeedSequence([arrangement_key, seed]))
    objects = []
    epcs = [f"EPC-{seed:03d}-{i:02d}" for i in range(n_objects)]
    if arrangement == FREE:
        angles = np.linspace(0, 2 * np.pi, n_objects, endpoint=False) + rng.uniform(0, 2 * np.pi)
        spread = 0.16
        for i in range(n_objects):
            size = rng.uniform([0.05, 0.05, 0.06], [0.09, 0.09, 0.14])
            pos = [spread * np.cos(angles[i]) + rng.uniform(-0.015, 0.015),
                   spread * np.sin(angles[i]) + rng.uniform(-0.015, 0.015),
                   table_height + size[2] / 2.0]
            if i % 3 == 2:
                r, h = size[0] / 2.0, size[2]
                objects.append(_cylinder(i + 1, epcs[i], r, h, [pos[0], pos[1], table_height + h / 2]))
            else:
                objects.append(_box(i + 1, epcs[i], size, pos, yaw=rng.uniform(0, np.pi)))
    elif arrangement == TOUCHING:
        x = -0.12
        for i in range(n_objects):
            size = rng.uniform([0.09, 0.07, 0.08], [0.12, 0.10, 0.14])
            x += size[0] / 2.0
            objects.append(_box(i + 1, epcs[i], size, [x, rng.uniform(-0.005, 0.005), table_height + size[2] / 2.0]))
            x += size[0] / 2.0  # next box starts flush against this one
    else:  # stacked
        z = table_height
        n_stack = min(3, n_objects)
        for i in range(n_stack):
            size = rng.uniform([0.09, 0.09, 0.08], [0.13, 0.13, 0.12])
            objects.append(_box(i + 1, epcs[i], size, [rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), z + size[2] / 2.0],
                                yaw=rng.uniform(0, np.pi / 6)))
            z += size[2]
        for i in range(n_stack, n_objects):
            size = rng.uniform([0.05, 0.05, 0.06], [0.08, 0.08, 0.12])
            ang = rng.uniform(0, 2 * np.pi)
            objects.append(_box(i + 1, epcs[i], size, [0.22 * np.cos(ang), 0.22 * np.sin(ang), table_height + size[2] / 2.0],
                                yaw=rng.uniform(0, np.pi)))
    return SceneSpec(objects=objects, arrangement=arrangement, table_height=table_height)
