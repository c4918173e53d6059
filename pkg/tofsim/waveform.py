"""
Waveforms – sampled modulation, demodulation and received signals
=================================================================
Synthesis of sine / square signals on the digitizer grid, the four
phase-shifted demodulation copies, and the digitizer quantization model.
"""

import math
import logging
from dataclasses import dataclass, replace

import numpy as np

from tofsim.errors import SignalError

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 625e6   # Hz
DEFAULT_FREQUENCY = 31.25e6   # Hz, 20 échantillons par période
QUADRATURE_PHASES = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
SIGNAL_KINDS = ("sine", "square")


# ─────────────────────────────────────────────────────────────────────────────
# Types
# ─────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class SignalSpec:
    """Signal périodique : amplitude·forme(2πft + phase) + offset."""

    kind: str
    amplitude: float
    offset: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise SignalError(f"type de signal inconnu : {self.kind!r}")
        if not self.amplitude >= 0:
            raise SignalError(f"amplitude négative : {self.amplitude}")
        if not self.frequency > 0:
            raise SignalError(f"fréquence non positive : {self.frequency}")

    def shifted(self, delta):
        return replace(self, phase=self.phase + delta)

    def evaluate_cycles(self, cycles):
        """Valeurs du signal pour un temps exprimé en nombre de périodes (f·t)."""
        cycles = np.asarray(cycles, dtype=np.float64)
        if self.kind == "sine":
            return self.amplitude * np.sin(2 * np.pi * cycles + self.phase) + self.offset
        # front montant compris dans l'état haut, front descendant dans l'état bas
        frac = np.mod(cycles + self.phase / (2 * np.pi), 1.0)
        return np.where(frac < 0.5, self.offset + self.amplitude, self.offset - self.amplitude)


@dataclass(frozen=True, eq=False)
class Trace:
    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    origin_time: float = 0.0
    clipped: int = 0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.flags.writeable:
            samples = samples.copy()
        if samples.ndim != 1 or samples.size < 1:
            raise SignalError("une trace doit contenir au moins un échantillon (tableau 1D)")
        if not self.sample_rate > 0:
            raise SignalError(f"fréquence d'échantillonnage non positive : {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    def times(self):
        return self.origin_time + np.arange(self.samples.size) / self.sample_rate

    def periods(self, frequency):
        return self.samples.size * frequency / self.sample_rate

    def spans_integer_periods(self, frequency, tol=1e-9):
        periods = self.periods(frequency)
        return abs(periods - round(periods)) <= tol * max(1.0, periods) and round(periods) >= 1


# ─────────────────────────────────────────────────────────────────────────────
# Opérations
# ─────────────────────────────────────────────────────────────────────────────
def _check_grid(spec, sample_rate, n_samples):
    if not sample_rate > 0:
        raise SignalError(f"fréquence d'échantillonnage non positive : {sample_rate}")
    if int(n_samples) != n_samples or n_samples < 1:
        raise SignalError(f"nombre d'échantillons invalide : {n_samples}")
    if not sample_rate > 2 * spec.frequency:
        raise SignalError(
            f"sous-échantillonnage : fs={sample_rate:g} Hz <= 2·f={2 * spec.frequency:g} Hz"
        )


def synthesize(spec, sample_rate=DEFAULT_SAMPLE_RATE, n_samples=20):
    _check_grid(spec, sample_rate, n_samples)
    # f·i/fs calculé tel quel : les passages par zéro tombent sur des valeurs exactes
    cycles = spec.frequency * np.arange(int(n_samples)) / sample_rate
    return Trace(spec.evaluate_cycles(cycles), sample_rate)


def make_quadrature_set(spec, sample_rate=DEFAULT_SAMPLE_RATE, n_samples=20):
    """Les quatre copies du signal de démodulation décalées de 0, π/2, π, 3π/2."""
    _check_grid(spec, sample_rate, n_samples)
    return tuple(synthesize(spec.shifted(shift), sample_rate, n_samples) for shift in QUADRATURE_PHASES)


def quantize(trace, bits=10, full_scale=2.0):
    """
    Numériseur mid-tread : pas = full_scale/2^bits, niveaux k·pas avec
    k dans [-2^(bits-1), 2^(bits-1)], écrêtage à ±full_scale/2.
    Le nombre d'échantillons écrêtés est porté par `Trace.clipped`.
    """
    if int(bits) != bits or not 2 <= bits <= 24:
        raise SignalError(f"résolution hors limites [2, 24] : {bits}")
    if not full_scale > 0:
        raise SignalError(f"pleine échelle non positive : {full_scale}")
    lsb = full_scale / 2 ** int(bits)
    half = 2 ** (int(bits) - 1)
    x = trace.samples
    clipped = int(np.count_nonzero(np.abs(x) > full_scale / 2))
    codes = np.clip(np.round(x / lsb), -half, half)
    if clipped:
        logger.debug(f"⚠️ {clipped} échantillons écrêtés (pleine échelle {full_scale} V)")
    return Trace(codes * lsb, trace.sample_rate, trace.origin_time, clipped)
