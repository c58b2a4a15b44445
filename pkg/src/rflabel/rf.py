"""RFID phase model: wrapped phase from distance, unwrapping, and the
phase-delta to distance-delta conversion.

Phase moves through a full 360 degrees per half wavelength of one-way
distance (the signal travels the path twice).  Commodity readers report
phase modulo 180 degrees, so only unwrapped *differences* carry usable
spatial information; all units here are degrees and meters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class RfParams:
    wavelength: float = 0.3263  # meters, 915 MHz UHF band
    reader_modulus: float = 180.0  # degrees

    def __post_init__(self):
        if self.wavelength <= 0:
            raise InputError("wavelength must be positive")
        if self.reader_modulus not in (180.0, 360.0):
            raise InputError("reader modulus must be 180 or 360 degrees")

    @property
    def max_sample_displacement(self) -> float:
        """Largest one-way per-sample motion for which unwrapping is unambiguous."""
        return self.wavelength * self.reader_modulus / 1440.0


@dataclass(frozen=True)
class TagTrack:
    """Per-EPC series of wrapped phase readings with a missing-sample mask."""

    epc: str
    phase: np.ndarray  # degrees, valid only where present
    present: np.ndarray  # bool

    def __post_init__(self):
        phase = np.asarray(self.phase, dtype=float)
        present = np.asarray(self.present, dtype=bool)
        if phase.shape != present.shape:
            raise InputError("phase and present masks have different lengths")
        object.__setattr__(self, "phase", phase)
        object.__setattr__(self, "present", present)

    def __len__(self):
        return len(self.phase)


@dataclass(frozen=True)
class UnwrappedPhase:
    """Unwrapped phase at the present samples of a track.

    ``gap_spanning[k]`` is true when the step from sample k-1 to k crosses at
    least one missing read; the step value is still the minimal-|delta|
    representative, but callers may distrust it.
    """

    indices: np.ndarray
    values: np.ndarray  # degrees, unwrapped
    gap_spanning: np.ndarray  # bool, same length; [0] is always false


def phase_from_distance(d: float, params: RfParams) -> float:
    """Wrapped phase reported by the reader for a one-way distance d."""
    if np.any(np.asarray(d) < 0):
        raise InputError("distance must be non-negative")
    return np.mod((2.0 * np.asarray(d) / params.wavelength) * 360.0, params.reader_modulus)


def wrap_delta(delta, modulus: float):
    """Minimal-|delta| representative of delta mod modulus, in (-m/2, +m/2]."""
    d = np.mod(np.asarray(delta, dtype=float), modulus)
    return np.where(d > modulus / 2.0, d - modulus, d)


def unwrap(track: TagTrack, params: RfParams) -> UnwrappedPhase:
    """Unwrap the present samples of a track.

    Consecutive present samples are joined by the minimal-absolute-delta rule
    modulo the reader modulus; this is valid while per-sample motion stays
    under an eighth wavelength (for a 180-degree modulus).  Steps across
    missing-read gaps use the same rule but are flagged gap-spanning.
    """
    idx = np.nonzero(track.present)[0]
    if len(idx) == 0:
        raise InputError("track has no present samples")
    wrapped = track.phase[idx]
    out = np.empty(len(idx))
    out[0] = wrapped[0]
    if len(idx) > 1:
        deltas = wrap_delta(np.diff(wrapped), params.reader_modulus)
        out[1:] = wrapped[0] + np.cumsum(deltas)
    gaps = np.zeros(len(idx), dtype=bool)
    gaps[1:] = np.diff(idx) > 1
    return UnwrappedPhase(indices=idx, values=out, gap_spanning=gaps)


def phase_delta_to_distance_delta(dphase, params: RfParams):
    """One-way distance change implied by an unwrapped phase change."""
    return np.asarray(dphase, dtype=float) * params.wavelength / 720.0
