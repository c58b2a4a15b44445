"""Differential spatial profiles for instances and tags, and the
discriminativeness weighting.

An instance profile is the antenna-to-centroid distance over time; a tag
profile is reconstructed from unwrapped phase deltas.  Both are reduced to
per-sample distance *changes* so the reader's absolute-phase ambiguity
cancels out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rf
from .errors import InputError
from .geometry import Pose, RigidTransform, apply_offset


@dataclass(frozen=True)
class SpatialProfile:
    values: np.ndarray  # antenna-to-target distance per sample, meters
    present: np.ndarray  # bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.present, dtype=bool)
        if v.shape != p.shape:
            raise InputError("profile values and mask lengths differ")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "present", p)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class DifferentialProfile:
    deltas: np.ndarray  # length T-1, meters
    present: np.ndarray  # bool, length T-1

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        p = np.asarray(self.present, dtype=bool)
        if d.shape != p.shape:
            raise InputError("delta and mask lengths differ")
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "present", p)

    def __len__(self):
        return len(self.deltas)


@dataclass(frozen=True)
class WeightProfile:
    w: np.ndarray  # {0,1} per delta slot
    sigma: float


def antenna_positions(poses, offset: RigidTransform) -> np.ndarray:
    """World position of the antenna at each pose."""
    return np.array([apply_offset(p, offset).translation for p in poses])


def instance_profile(cloud_centroid: np.ndarray, poses, offset: RigidTransform) -> SpatialProfile:
    """Distance from the antenna to an instance centroid at every sample."""
    if len(poses) == 0:
        raise InputError("no poses")
    centroid = np.asarray(cloud_centroid, dtype=float)
    ant = antenna_positions(poses, offset)
    values = np.linalg.norm(ant - centroid, axis=1)
    return SpatialProfile(values, np.ones(len(values), dtype=bool))


def diff(profile: SpatialProfile) -> DifferentialProfile:
    """Consecutive differences of a spatial profile."""
    if len(profile) < 2:
        raise InputError("profile needs at least 2 samples")
    deltas = np.diff(profile.values)
    present = profile.present[1:] & profile.present[:-1]
    return DifferentialProfile(deltas, present)


def tag_profile(track: rf.TagTrack, params: rf.RfParams, max_gap: int = 3) -> DifferentialProfile:
    """Differential profile of a tag from its unwrapped phase.

    A step between consecutive present samples i < j is converted to a
    one-way distance change and, when it spans missing reads with j - i <=
    max_gap, spread uniformly over the covered delta slots.  Slots under
    wider gaps are marked absent.
    """
    if int(track.present.sum()) < 2:
        raise InputError("track needs at least 2 present samples")
    unwrapped = rf.unwrap(track, params)
    dist_deltas = rf.phase_delta_to_distance_delta(np.diff(unwrapped.values), params)
    t = len(track)
    deltas = np.zeros(t - 1)
    present = np.zeros(t - 1, dtype=bool)
    idx = unwrapped.indices
    for k in range(len(idx) - 1):
        i, j = idx[k], idx[k + 1]
        span = j - i
        if span > max_gap:
            continue
        deltas[i:j] = dist_deltas[k] / span
        present[i:j] = True
    return DifferentialProfile(deltas, present)


def weighting(instance_profiles, sigma: float) -> WeightProfile:
    """Per-slot binary weights from the thresholded normalized variance of
    instance deltas.

    Slots where the instances move indistinguishably (low cross-instance
    variance relative to the peak) carry no discriminative information and
    get weight 0.  A degenerate all-zero variance (single instance, or
    identical motion) yields all-ones via the 0/0 = 1 convention.
    """
    if len(instance_profiles) == 0:
        raise InputError("need at least one instance profile")
    lengths = {len(p) for p in instance_profiles}
    if len(lengths) != 1:
        raise InputError("instance profiles have mismatched lengths")
    deltas = np.stack([p.deltas for p in instance_profiles])
    v = deltas.var(axis=0)  # population variance across instances
    vmax = v.max()
    if vmax == 0.0:
        w = np.ones(deltas.shape[1])
    else:
        w = (v / vmax > sigma).astype(float)
    return WeightProfile(w=w, sigma=sigma)


def all_ones_weighting(length: int, sigma: float) -> WeightProfile:
    """Weighting disabled: every slot contributes (ablation mode)."""
    return WeightProfile(w=np.ones(length), sigma=sigma)
