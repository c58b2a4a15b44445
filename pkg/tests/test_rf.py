"""Phase model tests: wrapping, unwrapping, and distance conversion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflabel.errors import InputError
from rflabel.rf import (
    RfParams,
    TagTrack,
    phase_delta_to_distance_delta,
    phase_from_distance,
    unwrap,
    wrap_delta,
)


def brute_wrap_delta(delta, modulus):
    """Oracle: the representative of delta (mod modulus) with minimal |.|,
    ties resolved toward +modulus/2."""
    candidates = delta + modulus * np.arange(-12, 13)
    candidates = candidates[np.abs(np.abs(candidates) - np.abs(candidates).min()) < 1e-9]
    return candidates.max()  # tie -> positive branch


class TestParams:
    def test_defaults(self):
        p = RfParams()
        assert p.wavelength == 0.3263
        assert p.reader_modulus == 180.0

    def test_max_sample_displacement_is_eighth_wavelength_at_180(self):
        p = RfParams()
        assert p.max_sample_displacement == pytest.approx(p.wavelength / 8.0, abs=1e-15)

    def test_max_sample_displacement_is_quarter_wavelength_at_360(self):
        p = RfParams(reader_modulus=360.0)
        assert p.max_sample_displacement == pytest.approx(p.wavelength / 4.0, abs=1e-15)

    def test_rejects_bad_modulus(self):
        with pytest.raises(InputError):
            RfParams(reader_modulus=90.0)

    def test_rejects_bad_wavelength(self):
        with pytest.raises(InputError):
            RfParams(wavelength=0.0)


class TestPhaseFromDistance:
    def test_zero_distance(self):
        assert phase_from_distance(0.0, RfParams()) == 0.0

    def test_half_wavelength_wraps_to_zero(self):
        p = RfParams()
        # one-way distance of lambda/2 -> full 360 of round-trip phase
        assert phase_from_distance(p.wavelength / 2.0, p) == pytest.approx(0.0, abs=1e-9)

    def test_eighth_wavelength_is_90(self):
        p = RfParams()
        assert phase_from_distance(p.wavelength / 8.0, p) == pytest.approx(90.0, abs=1e-9)

    def test_reader_modulus_halves_the_range(self):
        p = RfParams()
        # lambda/4 gives 180 of round-trip phase, reported as 0 mod 180
        assert phase_from_distance(p.wavelength / 4.0, p) == pytest.approx(0.0, abs=1e-9)

    def test_range(self):
        p = RfParams()
        d = np.linspace(0, 2.0, 500)
        ph = phase_from_distance(d, p)
        assert ((0 <= ph) & (ph < 180.0)).all()

    def test_rejects_negative(self):
        with pytest.raises(InputError):
            phase_from_distance(-0.1, RfParams())


class TestWrapDelta:
    @given(st.floats(-1000, 1000), st.sampled_from([180.0, 360.0]))
    @settings(max_examples=300)
    def test_matches_brute_force(self, delta, modulus):
        got = float(wrap_delta(delta, modulus))
        want = brute_wrap_delta(delta, modulus)
        assert got == pytest.approx(want, abs=1e-6)

    @given(st.floats(-1000, 1000), st.sampled_from([180.0, 360.0]))
    @settings(max_examples=300)
    def test_in_half_open_interval(self, delta, modulus):
        got = float(wrap_delta(delta, modulus))
        assert -modulus / 2.0 < got <= modulus / 2.0

    def test_congruent(self):
        assert float(wrap_delta(170.0, 180.0)) == pytest.approx(-10.0)
        assert float(wrap_delta(-170.0, 180.0)) == pytest.approx(10.0)
        assert float(wrap_delta(90.0, 180.0)) == pytest.approx(90.0)  # tie -> +m/2


class TestUnwrap:
    def test_round_trip_recovers_distance_deltas(self):
        p = RfParams()
        rng = np.random.default_rng(7)
        d = 1.0 + np.cumsum(rng.uniform(-0.9, 0.9, 200) * p.max_sample_displacement)
        track = TagTrack("e", phase_from_distance(d, p), np.ones(len(d), dtype=bool))
        u = unwrap(track, p)
        got = phase_delta_to_distance_delta(np.diff(u.values), p)
        assert np.abs(got - np.diff(d)).max() < 1e-9

    def test_wrap_event_resolves_to_minimal_branch(self):
        p = RfParams()
        track = TagTrack("e", np.array([170.0, 10.0]), np.array([True, True]))
        u = unwrap(track, p)
        # 170 -> 10 is a +20 step across the wrap, not a -160 jump
        assert u.values[1] - u.values[0] == pytest.approx(20.0)

    def test_gap_spanning_flag(self):
        p = RfParams()
        track = TagTrack("e", np.array([10.0, 0.0, 20.0]), np.array([True, False, True]))
        u = unwrap(track, p)
        assert list(u.indices) == [0, 2]
        assert list(u.gap_spanning) == [False, True]

    def test_absent_samples_skipped(self):
        p = RfParams()
        track = TagTrack("e", np.array([10.0, 999.0, 20.0]), np.array([True, False, True]))
        u = unwrap(track, p)
        assert u.values[1] == pytest.approx(20.0)

    def test_empty_track_rejected(self):
        with pytest.raises(InputError):
            unwrap(TagTrack("e", np.zeros(3), np.zeros(3, dtype=bool)), RfParams())

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(InputError):
            TagTrack("e", np.zeros(3), np.zeros(4, dtype=bool))


class TestPhaseDeltaToDistanceDelta:
    def test_hand_value(self):
        p = RfParams(wavelength=0.32)
        # 360 degrees of phase = half a wavelength of one-way distance
        assert phase_delta_to_distance_delta(360.0, p) == pytest.approx(0.16)

    def test_sign(self):
        p = RfParams()
        assert phase_delta_to_distance_delta(-720.0, p) == pytest.approx(-p.wavelength)
