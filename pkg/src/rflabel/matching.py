"""Reward matrix construction and maximum-weight bipartite assignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import profiles, rf
from .errors import InputError
from .profiles import DifferentialProfile, WeightProfile

F_FLOOR = 1e-9  # meters; degenerate perfect-match scale

PER_PAIR = "per_pair"
GLOBAL = "global"


@dataclass(frozen=True)
class MatchConfig:
    sigma: float = 0.1
    f_policy: str = PER_PAIR
    max_gap: int = 3

    def __post_init__(self):
        if self.f_policy not in (PER_PAIR, GLOBAL):
            raise InputError(f"unknown f_policy {self.f_policy!r}")


@dataclass
class Assignment:
    pairs: list  # (instance id, epc, reward score)
    unmatched_instances: list = field(default_factory=list)
    unmatched_tags: list = field(default_factory=list)


class EmptyOverlap(Exception):
    """No co-present samples between two differential profiles."""


def scaling_factor(dx: DifferentialProfile, dy: DifferentialProfile) -> float:
    """Per-pair scale: the maximum absolute delta difference over co-present
    samples, floored at F_FLOOR for degenerate perfect agreement."""
    both = dx.present & dy.present
    if not both.any():
        raise EmptyOverlap
    m = float(np.abs(dx.deltas[both] - dy.deltas[both]).max())
    return max(m, F_FLOOR)


def reward(dx: DifferentialProfile, dy: DifferentialProfile, w: WeightProfile, f: float) -> float:
    """Similarity reward between an instance and a tag profile.

    Each co-present slot contributes w(t) * (1 - min(1, |dx - dy| / f));
    slots where the tag was not read contribute nothing, which is what makes
    a reward (rather than a loss) robust to missing reads.
    """
    if len(dx) != len(dy) or len(dx) != len(w.w):
        raise InputError("profile/weight length mismatch")
    if f <= 0:
        raise InputError("scaling factor must be positive")
    both = dx.present & dy.present
    terms = 1.0 - np.minimum(1.0, np.abs(dx.deltas - dy.deltas) / f)
    return float((w.w * terms)[both].sum())


def _optimal_total(rewards: np.ndarray) -> float:
    if rewards.size == 0 or 0 in rewards.shape:
        return 0.0
    r, c = linear_sum_assignment(rewards, maximize=True)
    return float(rewards[r, c].sum())


def hungarian(rewards: np.ndarray) -> Assignment:
    """Maximum-weight assignment of rows (instances) to columns (tags).

    Returns min(n_rows, n_cols) pairs maximizing total reward.  Among
    equally optimal matchings the lexicographically smallest pair set is
    chosen, so the result is deterministic.
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        nx = rewards.shape[0] if rewards.ndim == 2 else 0
        ny = rewards.shape[1] if rewards.ndim == 2 else 0
        return Assignment(pairs=[], unmatched_instances=list(range(nx)), unmatched_tags=list(range(ny)))
    if not np.isfinite(rewards).all() or (rewards < 0).any():
        raise InputError("reward matrix entries must be finite and non-negative")

    nx, ny = rewards.shape
    best = _optimal_total(rewards)
    # Greedy lexicographic refinement: fix the smallest (row, col) pair that
    # still admits an optimal completion, then recurse on the remainder.
    rows = list(range(nx))
    cols = list(range(ny))
    pairs = []
    eps = 1e-9 * max(1.0, abs(best))
    remaining = best
    while len(pairs) < min(nx, ny):
        fixed = False
        for i in rows:
            for j in cols:
                sub = rewards[np.ix_([r for r in rows if r != i], [c for c in cols if c != j])]
                if rewards[i, j] + _optimal_total(sub) >= remaining - eps:
                    pairs.append((i, j, float(rewards[i, j])))
                    remaining -= rewards[i, j]
                    rows.remove(i)
                    cols.remove(j)
                    fixed = True
                    break
            if fixed:
                break
        if not fixed:  # numerically impossible, but avoid hanging
            break
    return Assignment(pairs=pairs, unmatched_instances=rows, unmatched_tags=cols)


def build_reward_matrix(instance_dps, tag_dps, w: WeightProfile, f_policy: str = PER_PAIR):
    """Reward matrix over instances x tags under the chosen F policy."""
    nx, ny = len(instance_dps), len(tag_dps)
    fs = np.full((nx, ny), np.nan)
    for i, dx in enumerate(instance_dps):
        for j, dy in enumerate(tag_dps):
            try:
                fs[i, j] = scaling_factor(dx, dy)
            except EmptyOverlap:
                pass
    if f_policy == GLOBAL:
        gmax = np.nanmax(fs) if np.isfinite(fs).any() else F_FLOOR
        fs = np.where(np.isnan(fs), np.nan, gmax)
    r = np.zeros((nx, ny))
    for i, dx in enumerate(instance_dps):
        for j, dy in enumerate(tag_dps):
            if not np.isnan(fs[i, j]):
                r[i, j] = reward(dx, dy, w, fs[i, j])
    return r


def match(scene, tags, poses, offset, params: rf.RfParams, config: MatchConfig,
          use_weighting: bool = True):
    """End-to-end matching: profiles -> weighting -> reward matrix -> assignment.

    Labels each matched scene instance with its EPC and returns
    (Assignment with instance ids / EPCs, reward matrix, weight profile).
    Tags with fewer than 2 present samples are excluded and reported
    unmatched.
    """
    if len(scene.instances) == 0:
        raise InputError("scene has no registered instances")
    usable, skipped = [], []
    for t in tags:
        (usable if int(t.present.sum()) >= 2 else skipped).append(t)
    if not usable:
        raise InputError("no tag has at least 2 present samples")

    instance_dps = [
        profiles.diff(profiles.instance_profile(inst.cloud.centroid, poses, offset))
        for inst in scene.instances
    ]
    tag_dps = [profiles.tag_profile(t, params, max_gap=config.max_gap) for t in usable]
    if use_weighting:
        w = profiles.weighting(instance_dps, config.sigma)
    else:
        w = profiles.all_ones_weighting(len(instance_dps[0]), config.sigma)

    rewards = build_reward_matrix(instance_dps, tag_dps, w, config.f_policy)
    raw = hungarian(rewards)
    pairs = [(scene.instances[i].instance_id, usable[j].epc, s) for i, j, s in raw.pairs]
    unmatched_instances = [scene.instances[i].instance_id for i in raw.unmatched_instances]
    unmatched_tags = [usable[j].epc for j in raw.unmatched_tags] + [t.epc for t in skipped]
    assignment = Assignment(pairs, unmatched_instances, unmatched_tags)
    return assignment, rewards, w


def matching_precision(assignment: Assignment, instance_to_object, instance_to_epc) -> float:
    """Fraction of assigned pairs whose EPC matches the tagged object's EPC.

    ``instance_to_object`` maps registered instance ids to ground-truth
    object ids (instances with no counterpart may be absent).  0/0 = 1.
    """
    if len(assignment.pairs) == 0:
        return 1.0
    correct = 0
    for inst_id, epc, _ in assignment.pairs:
        obj = instance_to_object.get(inst_id)
        if obj is not None and instance_to_epc.get(obj) == epc:
            correct += 1
    return correct / len(assignment.pairs)
