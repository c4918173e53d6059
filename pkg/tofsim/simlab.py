"""
Monte Carlo measurement lab
===========================
Shot-noisy digitized received traces are generated sample by sample through
the APD chain, quantized, demodulated and reduced to precision statistics:
single measurements, sample series with moving-average statistics, precision
sweeps over distance / reflectivity / integration time, and the comparison of
the simulated spread with the shot-noise precision model.
"""

import math
import logging
import itertools
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import pandas as pd
from scipy import stats

from tofsim.demod import ambiguity_range, demodulate4, distance_to_phase, extract
from tofsim.errors import SimulationError
from tofsim.radiometry import (
    ApdChain,
    PrecisionInput,
    distance_noise_percent,
    electrons_from_voltage,
    predict_noise,
    voltage_from_electrons,
)
from tofsim.utils import map_ordered, trial_rng
from tofsim.waveform import DEFAULT_FREQUENCY, DEFAULT_SAMPLE_RATE, SignalSpec, Trace, quantize, synthesize

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "distance_m",
    "reflectivity",
    "t_int_s",
    "std_m",
    "delta_percent",
    "mean_a",
    "mean_b",
    "model_std_m",
]
DEGENERATE_STD = 1e-15   # m, écart-type considéré nul


# ─────────────────────────────────────────────────────────────────────────────
# Types
# ─────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class MeasurementSetup:
    true_distance: float
    received_amplitude: float           # R, V
    received_offset: float              # R_DC, V
    integration_time: float = 16e-6
    seed: int = 0
    chain: ApdChain = field(default_factory=ApdChain)
    digitizer: tuple = (10, 2.0)        # (bits, pleine échelle V)
    modulation_frequency: float = DEFAULT_FREQUENCY
    sample_rate: float = DEFAULT_SAMPLE_RATE
    demod: SignalSpec = None
    gaussian_threshold: float = 1000.0
    noise: bool = True
    dc_disturbance: float = 0.0         # V, niveau continu électronique sans bruit de grenaille
    pseudo_electrons: float = 0.0
    stream: int = None                  # sous-flux aléatoire (point de balayage)

    def __post_init__(self):
        if not self.true_distance >= 0:
            raise SimulationError(f"distance vraie négative : {self.true_distance}")
        if not (self.received_amplitude >= 0 and self.received_offset >= 0):
            raise SimulationError("R et R_DC doivent être >= 0")
        if not self.integration_time > 0:
            raise SimulationError(f"T_int non positif : {self.integration_time}")
        if self.pseudo_electrons < 0:
            raise SimulationError("N_pseudo doit être >= 0")
        object.__setattr__(self, "digitizer", tuple(self.digitizer))
        if self.demod is None:
            object.__setattr__(
                self, "demod", SignalSpec("sine", 0.4704, 0.0099, self.modulation_frequency)
            )
        if self.n_samples < 1:
            raise SimulationError(
                f"T_int={self.integration_time:g} s plus court qu'un échantillon à {self.sample_rate:g} Hz"
            )

    @property
    def n_samples(self):
        return int(round(self.integration_time * self.sample_rate))

    @property
    def received_spec(self):
        phase = distance_to_phase(self.true_distance, self.modulation_frequency)
        return SignalSpec(
            "sine", self.received_amplitude, self.received_offset, self.modulation_frequency, -phase
        )


@dataclass(frozen=True, eq=False)
class SampleSeries:
    values: np.ndarray
    name: str = "distance"
    reference: float = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def trial_count(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class SeriesStats:
    count: int
    mean: float
    std: float
    window: int
    moving_average: np.ndarray
    seasonal_std: float
    fit_mean: float
    fit_sigma: float
    normality_pvalue: float = None
    bias: float = None

    def to_dict(self):
        return {
            "count": self.count,
            "mean": self.mean,
            "std": self.std,
            "window": self.window,
            "seasonal_std": self.seasonal_std,
            "fit_mean": self.fit_mean,
            "fit_sigma": self.fit_sigma,
            "normality_pvalue": self.normality_pvalue,
            "bias": self.bias,
        }


@dataclass(frozen=True, eq=False)
class ModelComparison:
    table: pd.DataFrame
    mae_m: float
    relative_mae: float
    degenerate: bool


# ─────────────────────────────────────────────────────────────────────────────
# Mesure unique
# ─────────────────────────────────────────────────────────────────────────────
@lru_cache(maxsize=32)
def _expected_electrons(setup):
    # par échantillon, Δt = 1/fs
    noiseless = synthesize(setup.received_spec, setup.sample_rate, setup.n_samples)
    volts = noiseless.samples
    negative = int(np.count_nonzero(volts < 0))
    if negative:
        logger.debug(f"{negative} échantillons de puissance négative ramenés à 0")
        volts = np.clip(volts, 0.0, None)
    mean = electrons_from_voltage(volts, 1.0 / setup.sample_rate, setup.chain)
    mean.setflags(write=False)
    return mean


def _draw_counts(rng, mean, threshold):
    counts = np.empty_like(mean)
    small = mean <= threshold
    # Poisson exact sous le seuil, approximation gaussienne au-dessus
    counts[small] = rng.poisson(mean[small])
    counts[~small] = rng.normal(mean[~small], np.sqrt(mean[~small]))
    return counts


def simulate_measurement(setup, index=0):
    """Une mesure de distance bruitée ; l'essai `index` ne dépend que de (graine, index)."""
    mean = _expected_electrons(setup)
    dt = 1.0 / setup.sample_rate
    if setup.noise:
        rng = trial_rng(setup.seed, index, setup.stream)
        counts = _draw_counts(rng, mean, setup.gaussian_threshold)
        if setup.pseudo_electrons:
            counts = counts + rng.normal(0.0, math.sqrt(setup.pseudo_electrons / mean.size), mean.size)
    else:
        counts = mean

    volts = voltage_from_electrons(counts, dt, setup.chain) + setup.dc_disturbance
    bits, full_scale = setup.digitizer
    trace = quantize(Trace(volts, setup.sample_rate), bits, full_scale)
    result = extract(demodulate4(trace, setup.demod))
    if trace.clipped:
        result = replace(result, flags=result.flags | {"clipped"})
    return result


def simulate_series(setup, n_trials=2000, threads=1):
    if n_trials < 1:
        raise SimulationError(f"nombre d'essais invalide : {n_trials}")
    return map_ordered(lambda i: simulate_measurement(setup, i), range(int(n_trials)), threads)


# ─────────────────────────────────────────────────────────────────────────────
# Séries d'échantillons
# ─────────────────────────────────────────────────────────────────────────────
def unwrap_distances(values, reference, frequency):
    """Ramène chaque distance dans ±c/(4f) autour de la référence."""
    span = ambiguity_range(frequency)
    values = np.asarray(values, dtype=np.float64)
    return reference + np.mod(values - reference + span / 2, span) - span / 2


def series_from_results(results, name="distance", reference=None):
    attribute = {"distance": "distance", "amplitude": "amplitude", "offset": "offset"}.get(name)
    if attribute is None:
        raise SimulationError(f"grandeur inconnue : {name!r}")
    values = np.array([getattr(r, attribute) for r in results], dtype=np.float64)
    if name == "distance" and reference is not None and results:
        values = unwrap_distances(values, reference, results[0].modulation_frequency)
    return SampleSeries(values, name, reference if name == "distance" else None)


def measurement_series(setup, n_trials=2000, threads=1):
    """Série distance / A / B à une distance fixe (acquisition de N échantillons)."""
    results = simulate_series(setup, n_trials, threads)
    return {
        "distance": series_from_results(results, "distance", setup.true_distance),
        "amplitude": series_from_results(results, "amplitude"),
        "offset": series_from_results(results, "offset"),
    }


def moving_average(values, window):
    """Moyenne glissante centrée, tronquée aux bords."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    idx = np.arange(n)
    lo = np.maximum(idx - (window - 1) // 2, 0)
    hi = np.minimum(idx + window // 2 + 1, n)
    cumsum = np.concatenate(([0.0], np.cumsum(x)))
    return (cumsum[hi] - cumsum[lo]) / (hi - lo)


def series_stats(series, window=100):
    x = series.values
    n = x.size
    if n == 0:
        raise SimulationError("série vide")
    if int(window) != window or not 1 <= window <= n:
        raise SimulationError(f"fenêtre {window} hors de [1, {n}]")
    window = int(window)

    std = float(np.std(x, ddof=1)) if n > 1 else 0.0
    smooth = moving_average(x, window)
    seasonal = float(np.std(smooth, ddof=1)) if n > 1 else 0.0

    if std > 0:
        fit_mean, fit_sigma = (float(v) for v in stats.norm.fit(x))
    else:
        fit_mean, fit_sigma = float(x[0]), 0.0
    # le test de D'Agostino demande au moins 20 valeurs
    pvalue = float(stats.normaltest(x).pvalue) if std > 0 and n >= 20 else None
    bias = float(np.mean(x) - series.reference) if series.reference is not None else None

    return SeriesStats(
        count=n,
        mean=float(np.mean(x)),
        std=std,
        window=window,
        moving_average=smooth,
        seasonal_std=seasonal,
        fit_mean=fit_mean,
        fit_sigma=fit_sigma,
        normality_pvalue=pvalue,
        bias=bias,
    )


# ─────────────────────────────────────────────────────────────────────────────
# Balayage de précision
# ─────────────────────────────────────────────────────────────────────────────
def demod_lines(spec):
    """(M, M_DC) : raie fondamentale et continue du signal de démodulation."""
    if spec.kind == "square":
        return 4 * spec.amplitude / math.pi, spec.offset
    return spec.amplitude, spec.offset


def precision_sweep(
    distances,
    reflectivities=None,
    integration_times=None,
    n_trials=None,
    cfg=None,
    threads=1,
    noise=True,
    dc_disturbance=0.0,
):
    """
    Écart-type de distance mesuré sur une grille (ρ, T_int, d).

    R suit la loi en 1/d² calibrée par `scanner.reference_*` ; la colonne
    model_std_m est la prédiction du modèle de bruit pour les A et B moyens.
    """
    from tofsim.config import config as defaults, demod_spec_from_config, setup_from_config
    from tofsim.scanner import calibrate, received_amplitude

    cfg = cfg or defaults
    scan = cfg["scanner"]
    reflectivities = list(reflectivities) if reflectivities is not None else [scan["reference_reflectivity"]]
    integration_times = (
        list(integration_times) if integration_times is not None else [cfg["integration_time"]]
    )
    distances = list(distances)
    n_trials = int(n_trials if n_trials is not None else cfg["trials"])
    if not (distances and reflectivities and integration_times):
        raise SimulationError("grille de balayage vide")
    if n_trials < 2:
        raise SimulationError(f"au moins 2 essais par point (reçu {n_trials})")

    power = cfg["laser"]["power"]
    cal = calibrate(scan["reference_amplitude"], scan["reference_reflectivity"], scan["reference_distance"], power)
    demod = demod_spec_from_config(cfg)
    m, m_dc = demod_lines(demod)
    coefficient = cfg["precision"]["coefficient"]

    rows = []
    grid = itertools.product(reflectivities, integration_times, distances)
    for point, (rho, t_int, d) in enumerate(grid):
        r, r_dc, saturated = received_amplitude(
            rho, d, power, cal, scan["modulation_depth"], cfg["digitizer"]["full_scale"]
        )
        if saturated:
            logger.warning(f"⚠️ d={d} m, ρ={rho} : signal reçu saturé")
        setup = setup_from_config(
            cfg,
            true_distance=d,
            received_amplitude=r,
            received_offset=r_dc,
            integration_time=t_int,
            noise=noise,
            dc_disturbance=dc_disturbance,
            stream=point,
        )
        results = simulate_series(setup, n_trials, threads)
        distance = series_from_results(results, "distance", d).values
        std = float(np.std(distance, ddof=1))
        mean_a = float(np.mean([res.amplitude for res in results]))
        mean_b = float(np.mean([res.offset for res in results]))
        model = predict_noise(
            PrecisionInput(mean_a, mean_b, t_int, setup.modulation_frequency, m, m_dc, setup.pseudo_electrons),
            setup.chain,
            coefficient,
        )
        rows.append([d, rho, t_int, std, distance_noise_percent(std, d) if d > 0 else math.nan,
                     mean_a, mean_b, model])
        logger.info(f"🔍 d={d:.3f} m ρ={rho:.2f} T={t_int:g} s : σ={std * 1e3:.3f} mm (modèle {model * 1e3:.3f} mm)")

    sweep = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    sweep.attrs.update(
        {
            "modulation_frequency": cfg["modulation_frequency"],
            "demod_amplitude": m,
            "demod_offset": m_dc,
            "pseudo_electrons": cfg["noise"]["pseudo_electrons"],
            "coefficient": coefficient,
        }
    )
    return sweep


def write_sweep_csv(sweep, filename):
    sweep[SWEEP_COLUMNS].to_csv(filename, index=False, float_format="%.9g", lineterminator="\n")
    logger.info(f"💾 Balayage écrit : {filename} ({len(sweep)} points)")


def model_vs_measured(sweep, chain, coefficient=None, form="derived"):
    """Compare l'écart-type simulé au modèle pour chaque point du balayage."""
    from tofsim.config import config as defaults

    missing = [c for c in ("mean_a", "mean_b", "t_int_s", "std_m") if c not in sweep.columns]
    if missing:
        raise SimulationError(f"colonnes manquantes dans le balayage : {', '.join(missing)}")
    attrs = sweep.attrs
    f = attrs.get("modulation_frequency", defaults["modulation_frequency"])
    m = attrs.get("demod_amplitude", defaults["demod"]["amplitude"])
    m_dc = attrs.get("demod_offset", defaults["demod"]["offset"])
    pseudo = attrs.get("pseudo_electrons", 0.0)
    coefficient = coefficient or attrs.get("coefficient", defaults["precision"]["coefficient"])

    def predicted(row):
        if not row.mean_a > 0:
            return math.nan
        return predict_noise(
            PrecisionInput(row.mean_a, max(row.mean_b, 0.0), row.t_int_s, f, m, m_dc, pseudo),
            chain,
            coefficient,
            form,
        )

    table = sweep.copy()
    table["predicted_std_m"] = [predicted(row) for row in sweep.itertuples(index=False)]
    table["abs_error_m"] = (table["predicted_std_m"] - table["std_m"]).abs()
    table["degenerate"] = table["std_m"] <= DEGENERATE_STD

    live = table[~table["degenerate"]]
    if live.empty:
        logger.warning("⚠️ écart-type mesuré nul sur tous les points : comparaison dégénérée")
        return ModelComparison(table, float(table["abs_error_m"].mean()), math.nan, True)
    mae = float(live["abs_error_m"].mean())
    relative = mae / float(live["std_m"].mean())
    logger.info(f"✅ Modèle vs mesure : MAE {mae * 1e3:.4f} mm ({relative:.1%})")
    return ModelComparison(table, mae, relative, bool(table["degenerate"].any()))
