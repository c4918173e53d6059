"""
FFT amplitude spectra
=====================
Rectangular window, zero-padding to n_fft, amplitudes normalized by the
record length (not n_fft).  With record 10,000 and n_fft 16,384 the
31.25 MHz tone sits 0.2 bin away from bin 819, so a sine of amplitude a
shows up as 0.97566·a in the one-sided spectrum:

    >>> from tofsim.waveform import SignalSpec, synthesize
    >>> s = amplitude_spectrum(synthesize(SignalSpec("sine", 0.4821, 0.0, 31.25e6), 625e6, 10_000), 16_384)
    >>> round(line_intensity(s, 31.25e6).magnitude, 4)
    0.4704
"""

import math
import logging
from dataclasses import dataclass

import numpy as np

from tofsim.errors import SpectrumError

logger = logging.getLogger(__name__)

DEFAULT_NFFT = 16_384
SCALINGS = ("one_sided", "two_sided")
DC_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class AmplitudeSpectrum:
    bin_frequencies: np.ndarray
    magnitudes: np.ndarray
    record_length: int
    n_fft: int
    sample_rate: float
    scaling: str = "one_sided"

    @property
    def resolution(self):
        return self.sample_rate / self.n_fft

    def energy(self):
        """Σ|x|² reconstruit à partir du demi-spectre (Parseval)."""
        factor = 2.0 if self.scaling == "one_sided" else 1.0
        coeffs = self.magnitudes * self.record_length
        coeffs = coeffs.copy()
        coeffs[1:] /= factor
        # les bins strictement entre DC et Nyquist comptent deux fois
        weights = np.full(coeffs.size, 2.0)
        weights[0] = 1.0
        if self.n_fft % 2 == 0:
            weights[-1] = 1.0
        return float(np.sum(weights * coeffs**2) / self.n_fft)


@dataclass(frozen=True)
class LineIntensity:
    magnitude: float
    bin_frequency: float
    bin_index: int


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def amplitude_spectrum(trace, n_fft=DEFAULT_NFFT, scaling="one_sided"):
    if scaling not in SCALINGS:
        raise SpectrumError(f"normalisation inconnue : {scaling!r}")
    n_rec = len(trace)
    if int(n_fft) != n_fft or not _is_power_of_two(int(n_fft)):
        raise SpectrumError(f"n_fft doit être une puissance de deux (reçu {n_fft})")
    n_fft = int(n_fft)
    if n_fft < n_rec:
        raise SpectrumError(f"n_fft={n_fft} plus petit que l'enregistrement ({n_rec})")

    spectrum = np.fft.rfft(trace.samples, n=n_fft)
    magnitudes = np.abs(spectrum) / n_rec
    if scaling == "one_sided":
        magnitudes[1:] *= 2.0
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / trace.sample_rate)
    magnitudes.setflags(write=False)
    freqs.setflags(write=False)
    return AmplitudeSpectrum(freqs, magnitudes, n_rec, n_fft, trace.sample_rate, scaling)


def line_intensity(spectrum, freq):
    nyquist = spectrum.sample_rate / 2
    if not 0 <= freq <= nyquist:
        raise SpectrumError(f"fréquence {freq} Hz hors de [0, {nyquist}] Hz")
    position = freq / spectrum.resolution
    # égalité entre deux bins : on garde le bin inférieur
    index = int(math.ceil(position - 0.5))
    index = min(max(index, 0), spectrum.magnitudes.size - 1)
    return LineIntensity(
        float(spectrum.magnitudes[index]), float(spectrum.bin_frequencies[index]), index
    )


def spectral_contrast(received, demod, f):
    """(R_f·M_f)/(R_0·M_0) ; +inf si le produit des composantes continues est nul."""
    if received.n_fft != demod.n_fft or not math.isclose(received.sample_rate, demod.sample_rate):
        raise SpectrumError("les deux spectres doivent partager fs et n_fft")
    if received.scaling != demod.scaling:
        logger.debug(f"spectres en normalisations différentes : {received.scaling} / {demod.scaling}")
    numerator = line_intensity(received, f).magnitude * line_intensity(demod, f).magnitude
    r_dc = line_intensity(received, 0.0).magnitude
    m_dc = line_intensity(demod, 0.0).magnitude
    # composante continue au niveau du bruit d'arrondi de la FFT = nulle
    if r_dc <= DC_FLOOR * received.magnitudes.max() or m_dc <= DC_FLOOR * demod.magnitudes.max():
        logger.warning("⚠️ produit des composantes continues nul : contraste infini")
        return math.inf
    return numerator / (r_dc * m_dc)


def write_spectrum_csv(spectrum, filename):
    with open(filename, "w", newline="\n", encoding="ascii") as f:
        f.write("frequency_hz,magnitude_v\n")
        for freq, mag in zip(spectrum.bin_frequencies, spectrum.magnitudes):
            f.write(f"{freq:.6f},{mag:.9g}\n")
    logger.info(f"💾 Spectre écrit : {filename} ({spectrum.magnitudes.size} bins)")
