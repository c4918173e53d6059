"""
APD radiometric chain and shot-noise-limited precision model
============================================================
Optical power <-> primary photoelectrons <-> output voltage through the
APD responsivity R_M, multiplication M̄ and transimpedance gain G, and the
distance-noise model built on those conversions.
"""

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.constants import e as ELEMENTARY_CHARGE
from scipy.constants import h as PLANCK

from tofsim.errors import RadiometryError

logger = logging.getLogger(__name__)

# coefficient géométrique du modèle de bruit
COEFFICIENTS = {
    "published": 1 / math.sqrt(8),
    # corrélation 4 phases avec un signal de démodulation sinusoïdal numérique
    "sinusoidal": math.sqrt(2) / math.pi,
}
FORMS = ("derived", "printed")


@dataclass(frozen=True)
class ApdChain:
    responsivity: float = 23.0          # A/W à λ, gain inclus
    transimpedance_gain: float = 1e5    # V/A
    multiplication: float = 50.0
    wavelength: float = 852e-9          # m

    def __post_init__(self):
        for name in ("responsivity", "transimpedance_gain", "multiplication", "wavelength"):
            if not getattr(self, name) > 0:
                raise RadiometryError(f"{name} doit être > 0 (reçu {getattr(self, name)})")
        qe_from_responsivity(self)

    @property
    def quantum_efficiency(self):
        return qe_from_responsivity(self)

    @property
    def photon_energy(self):
        return PLANCK * SPEED_OF_LIGHT / self.wavelength


@dataclass(frozen=True)
class PrecisionInput:
    amplitude: float                    # A, V²
    offset: float                       # B, V²
    integration_time: float             # s
    modulation_frequency: float = 31.25e6
    demod_amplitude: float = 0.4704     # M, V
    demod_offset: float = 0.0099        # M_DC, V
    pseudo_electrons: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise RadiometryError(f"amplitude A doit être > 0 (reçu {self.amplitude})")
        if not self.offset >= 0:
            raise RadiometryError(f"offset B doit être >= 0 (reçu {self.offset})")
        if not self.integration_time > 0:
            raise RadiometryError(f"T_int doit être > 0 (reçu {self.integration_time})")
        if not self.modulation_frequency > 0:
            raise RadiometryError("fréquence de modulation non positive")
        if not self.pseudo_electrons >= 0:
            raise RadiometryError("N_pseudo doit être >= 0")


# ─────────────────────────────────────────────────────────────────────────────
# Conversions puissance / électrons / tension
# ─────────────────────────────────────────────────────────────────────────────
def qe_from_responsivity(chain):
    """QE = R_M·hc/(M̄·q·λ)."""
    qe = chain.responsivity * PLANCK * SPEED_OF_LIGHT / (
        chain.multiplication * ELEMENTARY_CHARGE * chain.wavelength
    )
    if not 0 < qe <= 1 + 1e-12:
        raise RadiometryError(
            f"rendement quantique {qe:.4f} hors de (0, 1] : R_M, M̄ et λ incohérents"
        )
    return min(qe, 1.0)


def power_from_voltage(v, chain):
    return v / (chain.responsivity * chain.transimpedance_gain)


def voltage_from_power(p, chain):
    return p * chain.responsivity * chain.transimpedance_gain


def electrons_from_power(p, t_int, chain):
    return p * t_int * chain.quantum_efficiency / chain.photon_energy


def power_from_electrons(n, t_int, chain):
    return n * chain.photon_energy / (t_int * chain.quantum_efficiency)


def electrons_from_voltage(v, t_int, chain):
    """Photoélectrons primaires (avant multiplication) pour une tension v intégrée sur t_int."""
    if np.any(np.asarray(v) < 0):
        raise RadiometryError("tension négative")
    return electrons_from_power(power_from_voltage(v, chain), t_int, chain)


def voltage_from_electrons(n, t_int, chain):
    return voltage_from_power(power_from_electrons(n, t_int, chain), chain)


def correlation_to_electrons(inp, chain):
    """(A, B) -> (Â, B̂) via A = R·M/2, B = R_DC·M_DC puis la chaîne APD."""
    if not inp.demod_offset > 0:
        raise RadiometryError("M_DC nul : l'offset B ne se convertit pas en électrons")
    r = 2 * inp.amplitude / inp.demod_amplitude
    r_dc = inp.offset / inp.demod_offset
    return (
        electrons_from_voltage(r, inp.integration_time, chain),
        electrons_from_voltage(r_dc, inp.integration_time, chain),
    )


# ─────────────────────────────────────────────────────────────────────────────
# Modèle de précision
# ─────────────────────────────────────────────────────────────────────────────
def _coefficient(coefficient):
    if coefficient not in COEFFICIENTS:
        raise RadiometryError(f"coefficient inconnu : {coefficient!r}")
    return COEFFICIENTS[coefficient]


def predict_noise_electrons(a_e, b_e, n_pseudo=0.0, f=31.25e6, coefficient="published"):
    """ΔL = (c/4f)·κ·√(B̂ + N_pseudo)/Â, κ = 1/√8 pour le modèle publié."""
    if not a_e > 0:
        raise RadiometryError("Â doit être > 0")
    if b_e < 0 or n_pseudo < 0:
        raise RadiometryError("B̂ et N_pseudo doivent être >= 0")
    return (SPEED_OF_LIGHT / (4 * f)) * _coefficient(coefficient) * math.sqrt(b_e + n_pseudo) / a_e


def predict_noise(inp, chain, coefficient="published", form="derived"):
    """
    Écart-type de distance prédit à partir de (A, B, T_int).

    form="derived" : forme cohérente avec predict_noise_electrons après
        conversion (A, B) -> (Â, B̂) ;
    form="printed" : expression publiée telle quelle,
        (c/4f)·M·√(G·q·M̄)/(2·√T·M_DC)·(A/√(B/2))^-1.
    """
    if form not in FORMS:
        raise RadiometryError(f"forme inconnue : {form!r}")
    if not inp.demod_offset > 0:
        raise RadiometryError("M_DC nul : modèle de précision indéfini")
    gqm = chain.transimpedance_gain * ELEMENTARY_CHARGE * chain.multiplication
    scale = SPEED_OF_LIGHT / (4 * inp.modulation_frequency)
    root_t = math.sqrt(inp.integration_time)

    if form == "printed":
        if inp.pseudo_electrons:
            logger.debug("N_pseudo ignoré par la forme publiée")
        return (
            scale
            * inp.demod_amplitude * math.sqrt(gqm) / (2 * root_t * inp.demod_offset)
            * math.sqrt(inp.offset / 2) / inp.amplitude
        )

    variance = gqm * inp.offset / inp.demod_offset + gqm**2 * inp.pseudo_electrons / inp.integration_time
    return (
        scale * _coefficient(coefficient)
        * inp.demod_amplitude * math.sqrt(variance) / (2 * inp.amplitude * root_t)
    )


def distance_noise_percent(delta_l, reference):
    if not reference > 0:
        raise RadiometryError(f"distance de référence non positive : {reference}")
    return 100.0 * delta_l / reference
