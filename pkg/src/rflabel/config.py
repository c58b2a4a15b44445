"""Pipeline configuration: one JSON document with recorded defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import InputError


@dataclass(frozen=True)
class PipelineConfig:
    chamfer_threshold: float = 0.02  # meters
    prune_fraction: float = 0.2
    voxel: float = 0.005  # meters
    sigma: float = 0.1  # weighting threshold
    f_policy: str = "per_pair"
    max_gap: int = 3  # samples
    cull_m: float = 1.5  # meters
    boundary_tol_px: int = 2
    sample_stride: int = 10

    def __post_init__(self):
        if self.f_policy not in ("per_pair", "global"):
            raise InputError(f"unknown f_policy {self.f_policy!r}")
        for name in ("chamfer_threshold", "voxel", "cull_m"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")
        if not (0 < self.prune_fraction <= 1):
            raise InputError("prune_fraction must be in (0, 1]")
        if self.max_gap < 1 or self.boundary_tol_px < 0 or self.sample_stride < 1:
            raise InputError("invalid integer parameter")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: invalid JSON: {e.msg}")
        if not isinstance(d, dict):
            raise InputError(f"{path}: config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)
