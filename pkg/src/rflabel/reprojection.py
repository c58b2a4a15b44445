"""Project the labeled scene back into every frame as pixelwise EPC masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import chamfer


@dataclass(frozen=True)
class LabeledMaskFrame:
    timestamp: float
    pixels: np.ndarray  # label ids, 0 = background
    label_table: dict  # label id -> epc

    def __post_init__(self):
        used = {int(i) for i in np.unique(self.pixels) if i > 0}
        if not used <= set(self.label_table):
            raise InputError("labeled pixels without a label table entry")


def reproject(frame_observations, masks, scene, epc_by_instance, chamfer_threshold: float):
    """Label each frame's segmented pixels with the EPC of the closest scene
    instance.

    ``frame_observations`` is the per-frame dict of mask id -> world-frame
    cloud (the same observations registration consumed), ``masks`` the
    corrupted per-frame masks providing pixel support.  An observation whose
    Chamfer distance to every labeled instance is above the threshold stays
    background, as do observations with no depth.
    """
    labeled = {i: scene.by_id(i) for i in epc_by_instance}
    if not labeled:
        raise InputError("scene has no labeled instances")
    out = []
    for obs, mask in zip(frame_observations, masks):
        pixels = np.zeros_like(mask.pixels, dtype=np.uint8)
        table = {}
        for oid, cloud in sorted(obs.items()):
            if len(cloud) == 0:
                continue
            best_id, best_d = None, chamfer_threshold
            for inst_id, inst in sorted(labeled.items()):
                d = chamfer(cloud, inst.cloud)
                if d < best_d:
                    best_id, best_d = inst_id, d
            if best_id is not None:
                pixels[mask.pixels == oid] = best_id
                table[best_id] = epc_by_instance[best_id]
        out.append(LabeledMaskFrame(mask.timestamp, pixels, table))
    return out
