# -*- coding: utf-8 -*-
"""
tofsim – AMCW time-of-flight digital-parallel demodulation simulator
====================================================================
Batch command line: demodulation, spectra, precision prediction, Monte Carlo
sweeps and sample series, raster-scan rendering, and the sensor FoM table.

Exit codes: 0 success, 1 validation / usage error, 2 I/O error.
"""

import sys
import math
import logging
import argparse
from pathlib import Path

import numpy as np

from tofsim.config import (
    chain_from_config,
    demod_spec_from_config,
    load_config,
    setup_from_config,
    validate_config,
)
from tofsim.errors import TofSimError
from tofsim.utils import read_trace_csv, resolve_threads, setup_logging, to_json, write_json

logger = logging.getLogger(__name__)


# ─────────────────────────────────────────────────────────────────────────────
# Parser
# ─────────────────────────────────────────────────────────────────────────────
class _Parser(argparse.ArgumentParser):
    """argparse avec code de sortie 1 (et non 2) sur erreur d'usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: erreur : {message}\n")


def _resolution(text):
    try:
        width, height = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"résolution attendue au format LxH, reçu {text!r}")
    if width < 1 or height < 1:
        raise argparse.ArgumentTypeError(f"résolution invalide : {text!r}")
    return width, height


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"liste de nombres attendue, reçu {text!r}")


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"valeur > 0 attendue, reçu {text!r}")
    return value


def build_parser():
    parser = _Parser(prog="tofsim", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="fichier JSON surchargeant la configuration par défaut")
    parser.add_argument("--seed", type=int, help="graine globale (remplace config.seed)")
    parser.add_argument("-v", "--verbose", action="store_true", help="journalisation DEBUG")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("demod", help="démodulation 4 phases d'une trace reçue")
    p.add_argument("--received", help="trace reçue (CSV); par défaut synthétisée depuis la configuration")
    p.add_argument("--demod", help="trace de démodulation (CSV); par défaut le signal de la configuration")
    p.add_argument("--distance", type=float, help="distance simulée si aucune trace n'est fournie (m)")
    p.add_argument("--tint", type=_positive, help="temps d'intégration (s)")
    p.add_argument("--noisy", action="store_true", help="ajoute le bruit de grenaille à la trace synthétisée")
    p.add_argument("--write-trace", help="enregistre la trace reçue utilisée (CSV)")
    p.add_argument("--out", help="résultat JSON (sinon stdout)")
    p.add_argument("--plot", help="figure PNG du signal et de son spectre")
    p.set_defaults(handler=cmd_demod)

    p = sub.add_parser("spectrum", help="spectre d'amplitude FFT et raies DC / f")
    p.add_argument("--trace", help="trace (CSV); par défaut synthétisée")
    p.add_argument("--signal", choices=["received", "demod", "square"], default="received",
                   help="signal synthétisé si --trace est absent")
    p.add_argument("--record", type=int, default=10_000, help="nombre d'échantillons synthétisés")
    p.add_argument("--nfft", type=int, default=16_384, help="taille FFT (puissance de deux)")
    p.add_argument("--scaling", choices=["one_sided", "two_sided"], default="one_sided")
    p.add_argument("--out", help="spectre CSV frequency_hz,magnitude_v")
    p.add_argument("--plot", help="figure PNG")
    p.set_defaults(handler=cmd_spectrum)

    p = sub.add_parser("predict", help="précision de distance prédite à partir de A, B, T_int")
    p.add_argument("--a", type=_positive, required=True, help="amplitude A des échantillons corrélés (V²)")
    p.add_argument("--b", type=float, required=True, help="offset B des échantillons corrélés (V²)")
    p.add_argument("--tint", type=_positive, required=True, help="temps d'intégration (s)")
    p.add_argument("--f", type=_positive, help="fréquence de modulation (Hz)")
    p.add_argument("--reference", type=_positive, default=1.5, help="distance de référence pour δ (m)")
    p.add_argument("--form", choices=["printed", "derived"], default="printed")
    p.add_argument("--coefficient", choices=["published", "sinusoidal"], default="published")
    p.add_argument("--plot", help="ΔL en fonction de T_int (PNG)")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("sweep", help="balayage Monte Carlo de la précision")
    p.add_argument("--distances", type=_float_list, default=[1.0, 1.5, 2.0, 2.5, 3.0, 3.5])
    p.add_argument("--reflectivities", type=_float_list)
    p.add_argument("--tints", type=_float_list, help="temps d'intégration (s), séparés par des virgules")
    p.add_argument("--trials", type=int, help="essais par point (défaut config.trials)")
    p.add_argument("--no-noise", action="store_true", help="limite sans bruit (cas dégénéré)")
    p.add_argument("--out", help="CSV du balayage (sinon stdout)")
    p.add_argument("--compare", help="comparaison modèle / mesure (JSON)")
    p.add_argument("--plot", help="figure PNG")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("series", help="série de N mesures à une distance fixe")
    p.add_argument("--distance", type=_positive, help="distance (m), défaut scanner.reference_distance")
    p.add_argument("--tint", type=_positive)
    p.add_argument("--trials", type=int)
    p.add_argument("--window", type=int, default=100, help="fenêtre de moyenne glissante")
    p.add_argument("--out", help="statistiques JSON (sinon stdout)")
    p.add_argument("--plot", help="figure PNG de la série de distances")
    p.set_defaults(handler=cmd_series)

    p = sub.add_parser("scan", help="rendu d'une trame profondeur / amplitude")
    p.add_argument("--scene", required=True, help="scène JSON")
    p.add_argument("--res", type=_resolution, default=(64, 48), help="résolution LxH")
    p.add_argument("--tint", type=_positive, default=800e-9, help="temps d'intégration par pixel (s)")
    p.add_argument("--fov", help="champ de vue HxV en degrés (défaut config.scanner)")
    p.add_argument("--no-noise", action="store_true", help="rendu analytique sans bruit")
    p.add_argument("--out", help="raster de profondeur FDM1 (requis pour un rendu)")
    p.add_argument("--depth-in", help="raster FDM1 existant à évaluer avec --errors, sans nouveau rendu")
    p.add_argument("--amplitude-out", help="raster d'amplitude FAM1")
    p.add_argument("--csv", help="profondeur au format CSV")
    p.add_argument("--metadata", help="métadonnées JSON (défaut <out>.json)")
    p.add_argument("--errors", help="rapport d'erreur contre la vérité terrain (JSON)")
    p.add_argument("--plot", help="cartes profondeur / amplitude (PNG)")
    p.set_defaults(handler=cmd_scan)

    p = sub.add_parser("fom", help="tableau de figure de mérite des capteurs")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--table", help="CSV de capteurs")
    source.add_argument("--builtin", action="store_true", help="tableau publié (défaut)")
    p.add_argument("--out", help="tableau classé (CSV) ; sinon le CSV suit le tableau texte sur stdout")
    p.add_argument("--records-out", help="exporte les fiches capteurs lues (CSV réutilisable avec --table)")
    p.add_argument("--plot", help="figure PNG")
    p.set_defaults(handler=cmd_fom)
    return parser


def _emit(text, out=None):
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info(f"💾 Résultat écrit : {out}")
    else:
        sys.stdout.write(text)


# ─────────────────────────────────────────────────────────────────────────────
# Sous-commandes
# ─────────────────────────────────────────────────────────────────────────────
def cmd_demod(args, cfg):
    from tofsim.demod import demodulate4, extract
    from tofsim.simlab import MeasurementSetup, simulate_measurement
    from tofsim.utils import write_trace_csv
    from tofsim.waveform import Trace, quantize, synthesize

    f = cfg["modulation_frequency"]
    demod_base = read_trace_csv(args.demod) if args.demod else demod_spec_from_config(cfg)
    overrides = {"noise": args.noisy}
    if args.distance is not None:
        overrides["true_distance"] = args.distance
    if args.tint:
        overrides["integration_time"] = args.tint
    setup = setup_from_config(cfg, **overrides)

    if args.received:
        received = read_trace_csv(args.received)
    elif args.noisy:
        received = None
        result = simulate_measurement(setup)
    else:
        bits, full_scale = setup.digitizer
        received = quantize(synthesize(setup.received_spec, setup.sample_rate, setup.n_samples), bits, full_scale)

    if received is not None:
        result = extract(demodulate4(received, demod_base, f, resolve_threads(cfg)))
        if args.write_trace:
            write_trace_csv(received, args.write_trace)
        if args.plot:
            from tofsim.report import plot_spectrum
            from tofsim.spectrum import amplitude_spectrum

            n_fft = 1 << max(0, (len(received) - 1).bit_length())
            plot_spectrum(received, amplitude_spectrum(received, n_fft), args.plot, f)
    elif args.write_trace or args.plot:
        logger.warning("⚠️ --write-trace / --plot ignorés en mode --noisy")

    payload = result.to_dict()
    payload["flags"] = sorted(result.flags)
    _emit(to_json(payload), args.out)
    return 0


def cmd_spectrum(args, cfg):
    from tofsim.spectrum import amplitude_spectrum, line_intensity, write_spectrum_csv
    from tofsim.waveform import SignalSpec, synthesize

    f = cfg["modulation_frequency"]
    if args.trace:
        trace = read_trace_csv(args.trace)
    else:
        if args.signal == "received":
            scan = cfg["scanner"]
            spec = SignalSpec(
                "sine", scan["reference_amplitude"], scan["reference_amplitude"] / scan["modulation_depth"], f
            )
        elif args.signal == "square":
            spec = SignalSpec("square", 0.5, 0.5, f)
        else:
            spec = demod_spec_from_config(cfg)
        trace = synthesize(spec, cfg["sample_rate"], args.record)

    spectrum = amplitude_spectrum(trace, args.nfft, args.scaling)
    dc = line_intensity(spectrum, 0.0)
    line = line_intensity(spectrum, f)
    payload = {
        "dc_v": dc.magnitude,
        "line_v": line.magnitude,
        "line_bin_hz": line.bin_frequency,
        "line_to_dc": line.magnitude / dc.magnitude if dc.magnitude > 0 else math.inf,
        "n_fft": spectrum.n_fft,
        "record_length": spectrum.record_length,
        "record_energy_v2": spectrum.energy(),
        "scaling": spectrum.scaling,
    }
    if args.out:
        write_spectrum_csv(spectrum, args.out)
    if args.plot:
        from tofsim.report import plot_spectrum

        plot_spectrum(trace, spectrum, args.plot, f)
    _emit(to_json(payload))
    return 0


def cmd_predict(args, cfg):
    from tofsim.radiometry import PrecisionInput, distance_noise_percent, predict_noise

    chain = chain_from_config(cfg)
    inputs = PrecisionInput(
        amplitude=args.a,
        offset=args.b,
        integration_time=args.tint,
        modulation_frequency=args.f or cfg["modulation_frequency"],
        demod_amplitude=cfg["demod"]["amplitude"],
        demod_offset=cfg["demod"]["offset"],
        pseudo_electrons=cfg["noise"]["pseudo_electrons"],
    )
    delta_l = predict_noise(inputs, chain, args.coefficient, args.form)
    payload = {
        "delta_l_m": delta_l,
        "delta_percent": distance_noise_percent(delta_l, args.reference),
        "form": args.form,
        "coefficient": args.coefficient,
        "inputs": {
            "a": inputs.amplitude,
            "b": inputs.offset,
            "t_int_s": inputs.integration_time,
            "f_hz": inputs.modulation_frequency,
            "m": inputs.demod_amplitude,
            "m_dc": inputs.demod_offset,
            "n_pseudo": inputs.pseudo_electrons,
            "reference_m": args.reference,
            "quantum_efficiency": chain.quantum_efficiency,
        },
    }
    if args.plot:
        from dataclasses import replace

        from tofsim.report import plot_precision_curve

        tints = np.geomspace(args.tint / 10, args.tint * 10, 21)
        curve = [predict_noise(replace(inputs, integration_time=t), chain, args.coefficient, args.form) for t in tints]
        plot_precision_curve(tints, curve, args.plot)
    _emit(to_json(payload))
    return 0


def cmd_sweep(args, cfg):
    from tofsim.simlab import model_vs_measured, precision_sweep, write_sweep_csv

    sweep = precision_sweep(
        args.distances,
        args.reflectivities,
        args.tints,
        args.trials,
        cfg,
        threads=resolve_threads(cfg),
        noise=not args.no_noise,
    )
    if args.out:
        write_sweep_csv(sweep, args.out)
    else:
        sweep.to_csv(sys.stdout, index=False, float_format="%.9g", lineterminator="\n")
    if args.compare:
        comparison = model_vs_measured(sweep, chain_from_config(cfg))
        write_json(
            {
                "mae_m": comparison.mae_m,
                "relative_mae": comparison.relative_mae,
                "degenerate": comparison.degenerate,
                "points": comparison.table.to_dict(orient="records"),
            },
            args.compare,
        )
    if args.plot:
        from tofsim.report import plot_sweep

        plot_sweep(sweep, args.plot)
    return 0


def cmd_series(args, cfg):
    from tofsim.simlab import measurement_series, series_stats

    overrides = {}
    if args.distance:
        overrides["true_distance"] = args.distance
    if args.tint:
        overrides["integration_time"] = args.tint
    setup = setup_from_config(cfg, **overrides)
    series = measurement_series(setup, args.trials or cfg["trials"], resolve_threads(cfg))
    summary = {name: series_stats(s, args.window) for name, s in series.items()}
    payload = {name: stats.to_dict() for name, stats in summary.items()}
    payload["true_distance_m"] = setup.true_distance
    payload["t_int_s"] = setup.integration_time
    if args.plot:
        from tofsim.report import plot_series

        plot_series(series["distance"], summary["distance"], args.plot)
    _emit(to_json(payload), args.out)
    return 0


def cmd_scan(args, cfg):
    from tofsim.report import plot_error_histogram, plot_frame
    from tofsim.scanner import DepthFrame, RasterGrid, Scene, error_report, frame_time, render_frame
    from tofsim.utils import read_raster, write_raster, write_raster_csv

    scene = Scene.from_json(args.scene)
    if args.fov:
        h_deg, v_deg = (float(v) for v in args.fov.lower().split("x"))
    else:
        h_deg, v_deg = cfg["scanner"]["horizontal_fov_deg"], cfg["scanner"]["vertical_fov_deg"]

    if args.depth_in:
        # réévaluation d'une trame déjà rendue : la résolution vient du raster
        magic, depth = read_raster(args.depth_in)
        if magic != "FDM1":
            raise TofSimError(f"{args.depth_in} : raster de profondeur FDM1 attendu (reçu {magic})")
        if not args.errors:
            raise TofSimError("--depth-in nécessite --errors")
        grid = RasterGrid(depth.shape[1], depth.shape[0], math.radians(h_deg), math.radians(v_deg))
        frame = DepthFrame(
            depth=depth.astype(np.float64),
            amplitude=np.full(depth.shape, np.nan),
            saturated=np.zeros(depth.shape, dtype=bool),
            integration_time=args.tint,
            modulation_frequency=cfg["modulation_frequency"],
            frame_time=frame_time(grid, args.tint),
            seed=cfg["seed"],
        )
    else:
        if not args.out:
            raise TofSimError("--out est requis pour un rendu")
        width, height = args.res
        grid = RasterGrid(width, height, math.radians(h_deg), math.radians(v_deg))
        frame = render_frame(
            scene, grid, args.tint, noise=not args.no_noise, seed=cfg["seed"], cfg=cfg, threads=resolve_threads(cfg)
        )
        write_raster(frame.depth, args.out, "FDM1")
        if args.amplitude_out:
            write_raster(frame.amplitude, args.amplitude_out, "FAM1")
        if args.csv:
            write_raster_csv(frame.depth, args.csv)
        write_json(frame.metadata(), args.metadata or f"{args.out}.json")

    report = None
    if args.errors:
        report = error_report(frame, scene, grid)
        write_json(report.to_dict(), args.errors)
    if args.plot:
        plot_path = Path(args.plot)
        if not args.depth_in:
            plot_frame(frame, plot_path)
        if report is not None:
            plot_error_histogram(report, plot_path.with_name(f"{plot_path.stem}_errors.png"))
    return 0


def cmd_fom(args, cfg):
    from tofsim.fom import format_table, load_records, rank_table, write_records_csv, write_table_csv

    records = load_records(args.table)
    table = rank_table(records)
    sys.stdout.write(format_table(table) + "\n")
    if args.out:
        write_table_csv(table, args.out)
    else:
        sys.stdout.write("\n")
        write_table_csv(table, sys.stdout)
    if args.records_out:
        write_records_csv(records, args.records_out)
    if args.plot:
        from tofsim.report import plot_fom

        plot_fom(table, args.plot)
    return 0



# ─────────────────────────────────────────────────────────────────────────────
# Point d'entrée
# ─────────────────────────────────────────────────────────────────────────────
def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
            validate_config(cfg)
        return args.handler(args, cfg)
    except OSError as e:
        logger.error(f"❌ Erreur d'entrée/sortie : {e}")
        return 2
    except (TofSimError, ValueError) as e:
        logger.error(f"❌ {e}")
        return 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
