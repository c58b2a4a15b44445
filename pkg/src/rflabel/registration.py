"""Cross-frame instance registration: accumulate per-frame detections into
world-frame instance candidates via Chamfer matching, then prune transients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry import PointCloud, chamfer, directed_nn_means, voxel_downsample


@dataclass(frozen=True)
class RegistrationConfig:
    chamfer_threshold: float = 0.02  # meters
    prune_fraction: float = 0.2
    voxel: float = 0.005  # meters

    def __post_init__(self):
        if self.chamfer_threshold <= 0 or self.voxel <= 0:
            raise InputError("thresholds must be positive")
        if not (0 < self.prune_fraction <= 1):
            raise InputError("prune_fraction must be in (0, 1]")


@dataclass
class InstanceCandidate:
    cloud: PointCloud
    frames_seen: int
    first_seen: int


@dataclass
class RegisteredInstance:
    instance_id: int
    cloud: PointCloud
    frames_seen: int


@dataclass
class SceneMap:
    instances: list = field(default_factory=list)

    def by_id(self, instance_id: int) -> RegisteredInstance:
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst
        raise KeyError(instance_id)


def register(frames, config: RegistrationConfig) -> SceneMap:
    """Fold per-frame world-frame instance clouds into a SceneMap.

    ``frames`` is a time-ordered sequence of dicts mapping per-frame mask id
    to a world-frame PointCloud.  Each observation either updates the
    candidate with the smallest Chamfer distance below the threshold, or
    starts a new candidate.  Assignment within a frame is greedy by
    ascending distance and one-to-one; equal distances break toward the
    lower candidate index.  Candidates seen in fewer than
    prune_fraction * T frames are discarded.
    """
    frames = list(frames)
    if len(frames) == 0:
        raise InputError("empty frame sequence")

    candidates: list[InstanceCandidate] = []
    for t, observations in enumerate(frames):
        obs = [
            (oid, voxel_downsample(c, config.voxel))
            for oid, c in sorted(observations.items())
            if len(c) > 0
        ]
        # All (distance, obs, candidate) pairs under threshold, greedy one-to-one.
        scored = []
        for oi, (_, cloud) in enumerate(obs):
            for ci, cand in enumerate(candidates):
                d = chamfer(cloud, cand.cloud)
                if d < config.chamfer_threshold:
                    scored.append((d, oi, ci))
        scored.sort(key=lambda x: (x[0], x[1], x[2]))
        used_obs, used_cand = set(), set()
        for d, oi, ci in scored:
            if oi in used_obs or ci in used_cand:
                continue
            used_obs.add(oi)
            used_cand.add(ci)
            cand = candidates[ci]
            merged = PointCloud(
                np.vstack([cand.cloud.points, obs[oi][1].points]), frame=cand.cloud.frame
            )
            cand.cloud = voxel_downsample(merged, config.voxel)
            cand.frames_seen += 1
        for oi, (_, cloud) in enumerate(obs):
            if oi not in used_obs:
                candidates.append(InstanceCandidate(cloud=cloud, frames_seen=1, first_seen=t))

    min_frames = config.prune_fraction * len(frames)
    survivors = [c for c in candidates if c.frames_seen >= min_frames]
    survivors = _merge_duplicates(survivors, config)
    scene = SceneMap()
    for i, cand in enumerate(survivors, start=1):
        scene.instances.append(
            RegisteredInstance(instance_id=i, cloud=cand.cloud, frames_seen=cand.frames_seen)
        )
    return scene


def _merge_duplicates(cands, config: RegistrationConfig):
    """Fuse surviving candidates that describe the same physical object.

    Sensor noise can split one object into two persistent candidates whose
    clouds cover the same surface, so fuse until a fixed point.  Both
    directed nearest-neighbor means must fall under the threshold: the
    symmetric mean alone would also fuse a candidate with a merged-mask
    candidate that contains it plus a neighboring object.
    """
    cands = list(cands)
    merged = True
    while merged:
        merged = False
        for i in range(len(cands)):
            for j in range(i + 1, len(cands)):
                d_ij, d_ji = directed_nn_means(cands[i].cloud, cands[j].cloud)
                if max(d_ij, d_ji) < config.chamfer_threshold:
                    a, b = cands[i], cands[j]
                    cloud = voxel_downsample(
                        PointCloud(np.vstack([a.cloud.points, b.cloud.points]),
                                   frame=a.cloud.frame),
                        config.voxel,
                    )
                    cands[i] = InstanceCandidate(
                        cloud=cloud,
                        frames_seen=max(a.frames_seen, b.frames_seen),
                        first_seen=min(a.first_seen, b.first_seen),
                    )
                    del cands[j]
                    merged = True
                    break
            if merged:
                break
    return _drop_unions(cands, config)


def _drop_unions(cands, config: RegistrationConfig):
    """Remove candidates that are unions of two or more other candidates.

    Persistent under-segmentation (two adjacent objects detected as one mask)
    builds a candidate whose cloud contains the clouds of both per-object
    candidates.  Containment is one-directed: the contained cloud's mean
    nearest-neighbor distance into the container is small, not vice versa.
    """
    cands = list(cands)
    removed = True
    while removed and len(cands) > 2:
        removed = False
        for j in range(len(cands)):
            contained = [
                i
                for i in range(len(cands))
                if i != j
                and directed_nn_means(cands[i].cloud, cands[j].cloud)[0]
                < config.chamfer_threshold
            ]
            # The contained pair must be clearly distinct objects, otherwise
            # two overlapping fragments of one object would flag their parent.
            is_union = any(
                chamfer(cands[a].cloud, cands[b].cloud) >= 2.0 * config.chamfer_threshold
                for ai, a in enumerate(contained)
                for b in contained[ai + 1:]
            )
            if is_union:
                del cands[j]
                removed = True
                break
    return cands


def correspond(scene: SceneMap, gt_clouds, threshold: float):
    """Map each registered instance to its closest ground-truth object.

    ``gt_clouds`` maps object id -> world PointCloud.  An instance
    corresponds to the object with minimal Chamfer distance when that
    distance is below the threshold.
    """
    out = {}
    for inst in scene.instances:
        best, best_d = None, threshold
        for oid, cloud in sorted(gt_clouds.items()):
            d = chamfer(inst.cloud, cloud)
            if d < best_d:  # strict: ties keep the lowest object id
                best, best_d = oid, d
        if best is not None:
            out[inst.instance_id] = best
    return out


def recall_of(scene: SceneMap, gt_clouds, config: RegistrationConfig) -> float:
    """Fraction of ground-truth objects registered correctly and unambiguously.

    An object counts when exactly one registered instance matches it (Chamfer
    below threshold) and that instance matches no other object.
    """
    if len(gt_clouds) == 0:
        return 1.0
    # instance -> set of objects it matches, object -> set of instances
    inst_matches = {}
    obj_matches = {oid: set() for oid in gt_clouds}
    for inst in scene.instances:
        matches = set()
        for oid, cloud in gt_clouds.items():
            if chamfer(inst.cloud, cloud) < config.chamfer_threshold:
                matches.add(oid)
                obj_matches[oid].add(inst.instance_id)
        inst_matches[inst.instance_id] = matches
    ok = 0
    for oid in gt_clouds:
        insts = obj_matches[oid]
        if len(insts) == 1 and len(inst_matches[next(iter(insts))]) == 1:
            ok += 1
    return ok / len(gt_clouds)
