"""
Digital-parallel demodulation
=============================
The received trace is cross-correlated with four phase-shifted copies of the
demodulation signal over one shared integration window; amplitude, offset,
phase, distance and demodulation contrast are derived from the four samples.
"""

import math
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from tofsim.errors import DemodulationError
from tofsim.utils import map_ordered
from tofsim.waveform import SignalSpec, Trace, make_quadrature_set, synthesize

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi


# ─────────────────────────────────────────────────────────────────────────────
# Types
# ─────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class CorrelationSet:
    c0: float
    c1: float
    c2: float
    c3: float
    integration_time: float
    modulation_frequency: float
    integer_periods: bool = True

    def __post_init__(self):
        if not self.integration_time > 0:
            raise DemodulationError(f"temps d'intégration non positif : {self.integration_time}")
        if not self.modulation_frequency > 0:
            raise DemodulationError(f"fréquence de modulation non positive : {self.modulation_frequency}")

    @property
    def values(self):
        return (self.c0, self.c1, self.c2, self.c3)


@dataclass(frozen=True)
class DemodResult:
    amplitude: float
    offset: float
    phase: float
    distance: float
    contrast: float
    integration_time: float
    modulation_frequency: float
    flags: frozenset = field(default_factory=frozenset)

    @property
    def ok(self):
        return not self.flags

    def to_dict(self):
        return {
            "a": self.amplitude,
            "b": self.offset,
            "phase_rad": self.phase,
            "distance_m": self.distance,
            "contrast": self.contrast,
            "t_int_s": self.integration_time,
            "f_hz": self.modulation_frequency,
        }


# ─────────────────────────────────────────────────────────────────────────────
# Conversions phase <-> distance
# ─────────────────────────────────────────────────────────────────────────────
def ambiguity_range(frequency):
    """Intervalle sans ambiguïté c/(2f)."""
    return SPEED_OF_LIGHT / (2 * frequency)


def wrap_phase(phase):
    phase = math.fmod(phase, TWO_PI)
    if phase < 0:
        phase += TWO_PI
    if phase >= TWO_PI:
        phase = 0.0
    return phase


def phase_to_distance(phase, frequency):
    distance = SPEED_OF_LIGHT * wrap_phase(phase) / (4 * math.pi * frequency)
    if distance >= ambiguity_range(frequency):
        distance = 0.0
    return distance


def distance_to_phase(distance, frequency):
    """Phase aller-retour 4πfd/c (non repliée)."""
    return 4 * math.pi * frequency * distance / SPEED_OF_LIGHT


# ─────────────────────────────────────────────────────────────────────────────
# Corrélation
# ─────────────────────────────────────────────────────────────────────────────
def pairwise_sum(values):
    """Somme en arbre, ordre fixe : résultat identique quel que soit le thread appelant."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0])


def _check_pair(received, demod):
    if len(received) != len(demod):
        raise DemodulationError(f"longueurs différentes : {len(received)} vs {len(demod)}")
    if not math.isclose(received.sample_rate, demod.sample_rate, rel_tol=1e-12):
        raise DemodulationError(
            f"fréquences d'échantillonnage différentes : {received.sample_rate} vs {demod.sample_rate}"
        )


def correlate(received, demod, frequency=None):
    """C = (1/N)·Σ r[i]·s[i] sur la fenêtre d'intégration."""
    _check_pair(received, demod)
    if frequency is not None and not received.spans_integer_periods(frequency):
        logger.warning(
            f"⚠️ fenêtre de {received.periods(frequency):.3f} périodes : corrélation biaisée"
        )
    return pairwise_sum(received.samples * demod.samples) / len(received)


@lru_cache(maxsize=64)
def _spec_copies(spec, sample_rate, n_samples):
    shift = sample_rate / (4 * spec.frequency)
    window = Trace(np.zeros(n_samples), sample_rate)
    if _is_integer(shift) and window.spans_integer_periods(spec.frequency):
        base = synthesize(spec, sample_rate, n_samples)
        return _rotated_copies(base, int(round(shift)))
    return make_quadrature_set(spec, sample_rate, n_samples)


def _is_integer(value, tol=1e-9):
    return abs(value - round(value)) <= tol


def _rotated_copies(base, step):
    # s(t + φn/2πf) : avance de n·step échantillons
    return tuple(
        Trace(np.roll(base.samples, -n * step), base.sample_rate, base.origin_time)
        for n in range(4)
    )


def quadrature_copies(demod_base, n_samples, sample_rate, frequency=None):
    """Les quatre copies déphasées (0, π/2, π, 3π/2) et la fréquence de modulation."""
    if isinstance(demod_base, SignalSpec):
        return _spec_copies(demod_base, sample_rate, int(n_samples)), demod_base.frequency
    if frequency is None or not frequency > 0:
        raise DemodulationError("une trace de démodulation brute exige la fréquence de modulation")
    if len(demod_base) != n_samples:
        raise DemodulationError(f"longueurs différentes : {n_samples} vs {len(demod_base)}")
    shift = demod_base.sample_rate / (4 * frequency)
    if not _is_integer(shift):
        raise DemodulationError(
            f"décalage π/2 = {shift:.4f} échantillons : rotation impossible, fournir un SignalSpec"
        )
    return _rotated_copies(demod_base, int(round(shift))), frequency


def correlate4(received, copies, threads=1):
    for copy in copies:
        _check_pair(received, copy)
    return tuple(map_ordered(lambda s: correlate(received, s), copies, threads))


def demodulate4(received, demod_base, frequency=None, threads=1):
    copies, frequency = quadrature_copies(demod_base, len(received), received.sample_rate, frequency)
    integer_periods = received.spans_integer_periods(frequency)
    if not integer_periods:
        logger.warning(
            f"⚠️ T_int = {received.periods(frequency):.3f} périodes (non entier) : biais sur C(φn)"
        )
    c0, c1, c2, c3 = correlate4(received, copies, threads)
    return CorrelationSet(c0, c1, c2, c3, received.duration, frequency, integer_periods)


# ─────────────────────────────────────────────────────────────────────────────
# Extraction A, B, φ, d, contraste
# ─────────────────────────────────────────────────────────────────────────────
def extract(cs):
    in_phase = cs.c0 - cs.c2
    quadrature = cs.c3 - cs.c1
    amplitude = math.hypot(in_phase, quadrature) / 2
    offset = (cs.c0 + cs.c1 + cs.c2 + cs.c3) / 4
    flags = set()

    if in_phase == 0 and quadrature == 0:
        logger.warning("⚠️ amplitude nulle : phase indéfinie")
        flags.add("zero_amplitude")
        phase = 0.0
    else:
        # r = R·sin(ωt - φ), s_n = M·sin(ωt + φn) => C(φn) = RM/2·cos(φ + φn) : C3 - C1 = RM·sin φ
        phase = wrap_phase(math.atan2(quadrature, in_phase))

    if offset > 0:
        contrast = amplitude / offset
    else:
        flags.add("non_positive_offset")
        contrast = math.inf
    if not cs.integer_periods:
        flags.add("non_integer_periods")

    return DemodResult(
        amplitude=amplitude,
        offset=offset,
        phase=phase,
        distance=phase_to_distance(phase, cs.modulation_frequency),
        contrast=contrast,
        integration_time=cs.integration_time,
        modulation_frequency=cs.modulation_frequency,
        flags=frozenset(flags),
    )
