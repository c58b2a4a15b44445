"""Camera model, rigid transforms, point clouds, backprojection and Chamfer distance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError

CAMERA = "camera"
WORLD = "world"

_QUAT_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise InputError("principal point outside image")


def _check_unit_quaternion(q):
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise InputError("quaternion must have 4 components (w,x,y,z)")
    if abs(np.linalg.norm(q) - 1.0) > _QUAT_TOL:
        raise InputError(f"quaternion norm {np.linalg.norm(q)!r} is not 1")
    return q


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix from a unit quaternion in (w,x,y,z) order."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(r) -> np.ndarray:
    """Unit quaternion (w,x,y,z) from a rotation matrix, w >= 0."""
    r = np.asarray(r, dtype=float)
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(r[i, i] - r[j, j] - r[k, k] + 1.0) * 2
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation (unit quaternion, w-first) plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _check_unit_quaternion(self.rotation))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @classmethod
    def identity(cls):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.matrix().T + self.translation


@dataclass(frozen=True)
class Pose(RigidTransform):
    """Camera-to-world transform at a given time."""

    timestamp: float = 0.0


@dataclass(frozen=True)
class DepthFrame:
    """Per-pixel depth in millimeters, 0 = missing."""

    timestamp: float
    pixels: np.ndarray  # (h, w) uint16

    def __post_init__(self):
        object.__setattr__(self, "pixels", np.asarray(self.pixels))


@dataclass(frozen=True)
class InstanceMaskFrame:
    """Per-pixel instance ids, 0 = background. Ids are per-frame only."""

    timestamp: float
    pixels: np.ndarray  # (h, w) integer

    def __post_init__(self):
        object.__setattr__(self, "pixels", np.asarray(self.pixels))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3) meters
    frame: str = CAMERA

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if pts.size and not np.isfinite(pts).all():
            raise InputError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def centroid(self) -> np.ndarray:
        if len(self.points) == 0:
            raise InputError("centroid of empty cloud")
        return self.points.mean(axis=0)


def backproject(depth: DepthFrame, mask: InstanceMaskFrame, k: CameraIntrinsics, cull_m: float):
    """Backproject a depth frame into per-instance camera-frame point clouds.

    Pixels with zero depth or beyond the cull distance are skipped.  Returns a
    dict mapping instance id -> PointCloud; instances whose every pixel lacks
    depth are absent from the result.
    """
    if cull_m <= 0:
        raise InputError("cull distance must be positive")
    d = depth.pixels
    m = mask.pixels
    if d.shape != m.shape:
        raise InputError(f"depth {d.shape} and mask {m.shape} dimensions differ")
    if d.shape != (k.height, k.width):
        raise InputError("frame dimensions do not match intrinsics")
    if depth.timestamp != mask.timestamp:
        raise InputError("depth and mask timestamps differ")

    z = d.astype(float) / 1000.0
    valid = (d > 0) & (z <= cull_m) & (m > 0)
    vs, us = np.nonzero(valid)
    zv = z[vs, us]
    xs = (us - k.cx) * zv / k.fx
    ys = (vs - k.cy) * zv / k.fy
    pts = np.column_stack([xs, ys, zv])
    ids = m[vs, us]
    out = {}
    for i in np.unique(ids):
        out[int(i)] = PointCloud(pts[ids == i], frame=CAMERA)
    return out


def project(points_cam: np.ndarray, k: CameraIntrinsics):
    """Pinhole projection of camera-frame points, returns (u, v, z)."""
    p = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    z = p[:, 2]
    u = p[:, 0] * k.fx / z + k.cx
    v = p[:, 1] * k.fy / z + k.cy
    return u, v, z


def to_world(cloud: PointCloud, pose: Pose) -> PointCloud:
    if cloud.frame != CAMERA:
        raise InputError("cloud is not in the camera frame")
    return PointCloud(pose.apply(cloud.points), frame=WORLD)


def directed_nn_means(a: PointCloud, b: PointCloud):
    """Mean nearest-neighbor distance in each direction: (a->b, b->a)."""
    if len(a) == 0 or len(b) == 0:
        raise InputError("chamfer distance of an empty cloud")
    if a.frame != b.frame:
        raise InputError(f"frame mismatch: {a.frame} vs {b.frame}")
    d_ab = cKDTree(b.points).query(a.points, k=1)[0]
    d_ba = cKDTree(a.points).query(b.points, k=1)[0]
    return float(d_ab.mean()), float(d_ba.mean())


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """Symmetric mean nearest-neighbor distance between two clouds, in meters."""
    d_ab, d_ba = directed_nn_means(a, b)
    return 0.5 * (d_ab + d_ba)


def apply_offset(pose: Pose, offset: RigidTransform) -> Pose:
    """Compose camera-to-world with a rigid sensor offset (e.g. the antenna's
    mounting transform), yielding the offset sensor's world pose."""
    r_pose = pose.matrix()
    r = r_pose @ offset.matrix()
    t = r_pose @ offset.translation + pose.translation
    return Pose(matrix_to_quat(r), t, timestamp=pose.timestamp)


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Keep one representative point (the mean) per occupied voxel."""
    if voxel <= 0 or len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    n = inverse.max() + 1
    sums = np.zeros((n, 3))
    np.add.at(sums, inverse, cloud.points)
    counts = np.bincount(inverse, minlength=n).astype(float)
    return PointCloud(sums / counts[:, None], frame=cloud.frame)
