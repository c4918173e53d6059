"""PNG reports for signals, spectra, sample series, sweeps and frames."""

import logging

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)


def _save(fig, output_file):
    fig.tight_layout()
    fig.savefig(output_file)
    plt.close(fig)
    logger.info(f"📤 Figure enregistrée : {output_file}")
    return output_file


# === 1. Signal et spectre ===
def plot_spectrum(trace, spectrum, output_file, frequency=None, periods=5):
    fig, (ax_t, ax_f) = plt.subplots(2, 1, figsize=(8, 6))
    if frequency:
        shown = min(len(trace), int(round(periods * trace.sample_rate / frequency)))
    else:
        shown = len(trace)
    ax_t.plot(trace.times()[:shown] * 1e9, trace.samples[:shown], marker=".")
    ax_t.set_xlabel("t (ns)")
    ax_t.set_ylabel("V")
    ax_f.plot(spectrum.bin_frequencies / 1e6, spectrum.magnitudes)
    if frequency:
        ax_f.axvline(frequency / 1e6, color="tab:red", linestyle="--", linewidth=0.8)
        ax_f.set_xlim(0, min(spectrum.sample_rate / 2, 4 * frequency) / 1e6)
    ax_f.set_xlabel("f (MHz)")
    ax_f.set_ylabel(f"|X| (V, {spectrum.scaling})")
    return _save(fig, output_file)


# === 2. Série d'échantillons ===
def plot_series(series, stats, output_file, unit_scale=1e3, unit="mm"):
    fig, (ax_s, ax_h) = plt.subplots(1, 2, figsize=(10, 4), gridspec_kw={"width_ratios": [3, 1]})
    index = np.arange(series.trial_count)
    ax_s.plot(index, series.values * unit_scale, linewidth=0.5, label="échantillons")
    ax_s.plot(index, stats.moving_average * unit_scale, color="tab:red", label=f"moyenne glissante ({stats.window})")
    ax_s.set_xlabel("essai")
    ax_s.set_ylabel(f"{series.name} ({unit})")
    ax_s.legend(loc="upper right")
    ax_h.hist(series.values * unit_scale, bins=40, orientation="horizontal", density=True)
    if stats.fit_sigma > 0:
        y = np.linspace(series.values.min(), series.values.max(), 200)
        pdf = np.exp(-0.5 * ((y - stats.fit_mean) / stats.fit_sigma) ** 2) / (stats.fit_sigma * np.sqrt(2 * np.pi))
        ax_h.plot(pdf / unit_scale, y * unit_scale, color="tab:red")
    ax_h.set_title(f"σ = {stats.std * unit_scale:.3f} {unit}")
    return _save(fig, output_file)


# === 3. Balayage de précision ===
def plot_sweep(sweep, output_file):
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    panels = [
        ("std_m", "σ (mm)", 1e3),
        ("delta_percent", "δ (%)", 1.0),
        ("mean_a", "A (V²)", 1.0),
        ("mean_b", "B (V²)", 1.0),
    ]
    for ax, (column, label, scale) in zip(axes.ravel(), panels):
        for (rho, t_int), group in sweep.groupby(["reflectivity", "t_int_s"], sort=True):
            ax.plot(group["distance_m"], group[column] * scale, marker="o", label=f"ρ={rho:g}, T={t_int:g} s")
            if column == "std_m":
                ax.plot(group["distance_m"], group["model_std_m"] * scale, linestyle="--", color="gray")
        ax.set_xlabel("distance (m)")
        ax.set_ylabel(label)
    axes[0, 0].legend(fontsize="small")
    return _save(fig, output_file)


# === 4. Trames ===
def plot_frame(frame, output_file):
    fig, (ax_d, ax_a) = plt.subplots(1, 2, figsize=(10, 4))
    depth = ax_d.imshow(frame.depth, cmap="viridis")
    fig.colorbar(depth, ax=ax_d, label="profondeur (m)")
    ax_d.set_title(f"{frame.width}x{frame.height}, T={frame.integration_time:g} s")
    amplitude = ax_a.imshow(frame.amplitude, cmap="gray")
    fig.colorbar(amplitude, ax=ax_a, label="A (V²)")
    return _save(fig, output_file)


def plot_error_histogram(report, output_file):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(
        report.bin_edges[:-1] * 1e3,
        report.counts,
        width=np.diff(report.bin_edges) * 1e3,
        align="edge",
    )
    ax.set_xlabel("|erreur| (mm)")
    ax.set_ylabel("pixels")
    ax.set_title(f"max {report.max * 1e3:.2f} mm, RMS {report.rms * 1e3:.2f} mm")
    return _save(fig, output_file)


# === 5. Figure de mérite ===
def plot_fom(table, output_file):
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.barh(table["name"], table["fom_nj_per_pixel"])
    ax.set_xscale("log")
    ax.invert_yaxis()
    ax.set_xlabel("FoM (nJ/pixel)")
    return _save(fig, output_file)


def plot_precision_curve(integration_times, delta_l, output_file):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(np.asarray(integration_times) * 1e6, np.asarray(delta_l) * 1e3, marker="o")
    ax.set_xlabel("T_int (µs)")
    ax.set_ylabel("ΔL (mm)")
    ax.grid(True, which="both", linewidth=0.3)
    return _save(fig, output_file)
