"""Tests for four-phase correlation and the A / B / phase / distance extraction."""

import math

import numpy as np
import pytest

from tofsim.demod import (
    CorrelationSet,
    ambiguity_range,
    correlate,
    demodulate4,
    distance_to_phase,
    extract,
    pairwise_sum,
    phase_to_distance,
    wrap_phase,
)
from tofsim.errors import DemodulationError
from tofsim.waveform import QUADRATURE_PHASES, SignalSpec, Trace, synthesize

FS = 625e6
F_MOD = 31.25e6
T_INT = 16e-6
N_WINDOW = 10_000
RECEIVED_AMPLITUDE = 0.526
RECEIVED_OFFSET = 0.572
DEMOD = SignalSpec("sine", 0.4704, 0.0099, F_MOD)


def correlation_set(phase, rm=1.0, offset=0.0, t_int=T_INT, f=F_MOD):
    """Ideal samples C(φn) = RM/2·cos(φ + φn) + offset."""
    values = [rm / 2 * math.cos(phase + phi_n) + offset for phi_n in QUADRATURE_PHASES]
    return CorrelationSet(*values, t_int, f)


def received_trace(phase, amplitude=RECEIVED_AMPLITUDE, offset=RECEIVED_OFFSET, n_samples=N_WINDOW):
    return synthesize(SignalSpec("sine", amplitude, offset, F_MOD, -phase), FS, n_samples)


def phase_error(estimated, expected):
    return abs(math.remainder(estimated - expected, 2 * math.pi))


class TestConversions:
    """Phase / distance conversions and the ambiguity interval."""

    def test_ambiguity_range(self):
        """c/(2f) at 31.25 MHz."""
        assert ambiguity_range(F_MOD) == pytest.approx(4.796679328, rel=1e-9)

    def test_quarter_turn_distance(self):
        """φ = π/2 maps to c/(8f)."""
        assert phase_to_distance(math.pi / 2, F_MOD) == pytest.approx(1.199169832, rel=1e-9)

    def test_wrap_phase_range(self):
        """Wrapped phases stay in [0, 2π)."""
        for phase in (-1e-18, -math.pi, 2 * math.pi, 7.5, -13.0):
            wrapped = wrap_phase(phase)
            assert 0 <= wrapped < 2 * math.pi

    def test_distance_round_trip(self):
        """Distances inside the ambiguity interval survive phase conversion."""
        for distance in (0.0, 0.3, 1.5, 3.5, 4.7):
            phase = distance_to_phase(distance, F_MOD)
            assert phase_to_distance(phase, F_MOD) == pytest.approx(distance, abs=1e-12)

    def test_pairwise_sum_matches_sum(self):
        """Tree summation agrees with numpy for odd and even lengths."""
        rng = np.random.default_rng(3)
        for n in (1, 7, 1000, 1001):
            x = rng.normal(size=n)
            assert pairwise_sum(x) == pytest.approx(float(np.sum(x)), abs=1e-12)
        assert pairwise_sum([]) == 0.0


class TestCorrelate:
    """Single-phase cross-correlation over an integration window."""

    def test_unit_sine_autocorrelation(self):
        """A unit sine correlated with itself over whole periods gives 1/2."""
        s = synthesize(SignalSpec("sine", 1.0, 0.0, F_MOD), FS, 20)
        assert correlate(s, s) == pytest.approx(0.5, rel=1e-12)

    def test_orthogonal_sines(self):
        """Sine and cosine correlate to zero over whole periods."""
        s = synthesize(SignalSpec("sine", 1.0, 0.0, F_MOD), FS, 20)
        c = synthesize(SignalSpec("sine", 1.0, 0.0, F_MOD, math.pi / 2), FS, 20)
        assert correlate(s, c) == pytest.approx(0.0, abs=1e-12)

    def test_reference_operating_point(self):
        """In-phase correlation is R·M/2 + R_DC·M_DC."""
        r = received_trace(0.0)
        s = synthesize(DEMOD, FS, N_WINDOW)
        expected = RECEIVED_AMPLITUDE * 0.4704 / 2 + RECEIVED_OFFSET * 0.0099
        assert correlate(r, s) == pytest.approx(expected, rel=1e-9)

    def test_window_doubling_is_neutral(self):
        """Extending a whole-period window by another whole period leaves C unchanged."""
        spec = SignalSpec("sine", 0.5, 0.5, F_MOD)
        one = synthesize(spec, FS, 20)
        two = synthesize(spec, FS, 40)
        assert correlate(one, one) == pytest.approx(correlate(two, two), abs=1e-12)

    def test_partial_period_bias(self):
        """A window of 1.5 periods biases the correlation."""
        spec = SignalSpec("sine", 0.5, 0.5, F_MOD)
        whole = synthesize(spec, FS, 20)
        partial = synthesize(spec, FS, 30)
        assert abs(correlate(partial, partial) - correlate(whole, whole)) > 1e-3

    def test_length_mismatch(self):
        """Both traces must have the same length."""
        with pytest.raises(DemodulationError):
            correlate(Trace(np.zeros(20), FS), Trace(np.zeros(21), FS))

    def test_sample_rate_mismatch(self):
        """Both traces must share the sample rate."""
        with pytest.raises(DemodulationError):
            correlate(Trace(np.zeros(20), FS), Trace(np.zeros(20), FS / 2))


class TestDemodulate4:
    """Four-phase correlation of a received trace."""

    def test_zero_phase(self):
        """At φ = 0 the quadrature difference vanishes and the in-phase one is R·M."""
        cs = demodulate4(received_trace(0.0), DEMOD)
        assert cs.c0 - cs.c2 == pytest.approx(RECEIVED_AMPLITUDE * 0.4704, rel=1e-9)
        assert cs.c3 - cs.c1 == pytest.approx(0.0, abs=1e-12)

    def test_quarter_phase(self):
        """At φ = π/2 the in-phase difference vanishes."""
        cs = demodulate4(received_trace(math.pi / 2), DEMOD)
        assert cs.c0 - cs.c2 == pytest.approx(0.0, abs=1e-12)
        assert cs.c3 - cs.c1 == pytest.approx(RECEIVED_AMPLITUDE * 0.4704, rel=1e-9)

    def test_closed_form_amplitude_and_offset(self):
        """A = R·M/2 and B = R_DC·M_DC whatever the phase."""
        for phase in (0.3, 1.9, 4.4):
            result = extract(demodulate4(received_trace(phase), DEMOD))
            assert result.amplitude == pytest.approx(RECEIVED_AMPLITUDE * 0.4704 / 2, rel=1e-9)
            assert result.offset == pytest.approx(0.0056628, rel=1e-9)

    def test_phase_recovery_over_full_turn(self):
        """Noiseless phases are recovered to 1e-9 rad on a 1° grid."""
        worst = 0.0
        for k in range(360):
            phase = 2 * math.pi * k / 360
            received = received_trace(phase, 0.5, 0.3, 20)
            result = extract(demodulate4(received, SignalSpec("sine", 0.5, 0.01, F_MOD)))
            worst = max(worst, phase_error(result.phase, phase))
        assert worst < 1e-9

    def test_raw_trace_base_matches_spec(self):
        """A raw demodulation trace rotated by samples gives the same set as the spec."""
        received = received_trace(1.1)
        from_spec = demodulate4(received, DEMOD)
        from_trace = demodulate4(received, synthesize(DEMOD, FS, N_WINDOW), F_MOD)
        np.testing.assert_allclose(from_trace.values, from_spec.values, atol=1e-12)

    def test_raw_trace_needs_integer_shift(self):
        """A π/2 shift that is not a whole number of samples cannot be rotated."""
        f = 40e6
        received = synthesize(SignalSpec("sine", 0.5, 0.5, f), FS, 625)
        with pytest.raises(DemodulationError):
            demodulate4(received, synthesize(SignalSpec("sine", 0.5, 0.0, f), FS, 625), f)

    def test_raw_trace_needs_frequency(self):
        """A raw demodulation trace comes with its modulation frequency."""
        received = received_trace(0.0, n_samples=20)
        with pytest.raises(DemodulationError):
            demodulate4(received, synthesize(DEMOD, FS, 20))

    def test_partial_period_flag(self):
        """Windows that are not whole periods are flagged."""
        received = received_trace(0.5, n_samples=30)
        result = extract(demodulate4(received, DEMOD))
        assert "non_integer_periods" in result.flags
        assert not result.ok

    def test_threads_do_not_change_result(self):
        """Parallel correlation is bit-identical to the serial one."""
        received = received_trace(2.2)
        assert demodulate4(received, DEMOD, threads=1) == demodulate4(received, DEMOD, threads=4)


class TestExtract:
    """Amplitude, offset, phase, distance and contrast from four samples."""

    def test_hand_computed_set(self):
        """(0.5, 0.25, 0, 0.25) is φ = 0, A = 0.25, B = 0.25."""
        result = extract(CorrelationSet(0.5, 0.25, 0.0, 0.25, T_INT, F_MOD))
        assert result.phase == 0.0
        assert result.distance == 0.0
        assert result.amplitude == pytest.approx(0.25)
        assert result.offset == pytest.approx(0.25)
        assert result.contrast == pytest.approx(1.0)
        assert result.ok

    def test_quarter_turn_distance(self):
        """φ = π/2 reads c/(8f)."""
        result = extract(correlation_set(math.pi / 2))
        assert result.phase == pytest.approx(math.pi / 2, abs=1e-12)
        assert result.distance == pytest.approx(1.199169832, rel=1e-9)

    def test_full_turn_is_periodic(self):
        """Adding 2π to the phase reads the same distance."""
        a = extract(correlation_set(2.0))
        b = extract(correlation_set(2.0 + 2 * math.pi))
        assert a.distance == pytest.approx(b.distance, abs=1e-12)

    def test_contrast_at_reference_point(self):
        """A = 0.247, B = 0.00566 lands within 2 % of a contrast of 43.22."""
        a, b = 0.247, 0.00566
        result = extract(CorrelationSet(b + a, b, b - a, b, T_INT, F_MOD))
        assert result.amplitude == pytest.approx(a)
        assert result.offset == pytest.approx(b)
        assert result.contrast == pytest.approx(43.2203, rel=0.02)

    def test_zero_amplitude(self):
        """Equal samples give an undefined phase, reported as 0 with a flag."""
        result = extract(CorrelationSet(0.1, 0.1, 0.1, 0.1, T_INT, F_MOD))
        assert result.phase == 0.0
        assert result.amplitude == 0.0
        assert "zero_amplitude" in result.flags

    def test_non_positive_offset(self):
        """B <= 0 gives an infinite contrast and a flag."""
        result = extract(CorrelationSet(0.5, 0.0, -0.5, 0.0, T_INT, F_MOD))
        assert math.isinf(result.contrast)
        assert "non_positive_offset" in result.flags

    def test_to_dict_keys(self):
        """Serialized results carry the measurement and its context."""
        payload = extract(correlation_set(1.0, offset=0.1)).to_dict()
        assert set(payload) == {"a", "b", "phase_rad", "distance_m", "contrast", "t_int_s", "f_hz"}

    def test_invalid_correlation_set(self):
        """Integration time and frequency must be positive."""
        with pytest.raises(DemodulationError):
            CorrelationSet(0.0, 0.0, 0.0, 0.0, 0.0, F_MOD)
        with pytest.raises(DemodulationError):
            CorrelationSet(0.0, 0.0, 0.0, 0.0, T_INT, -1.0)
