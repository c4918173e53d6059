"""
Figure of merit across ToF sensors
==================================
FoM = (illumination power × frame time / pixel count) × distance-noise
percent, in nJ/pixel. The percent enters with its numeric value (0.056,
not 0.00056), which is the reading that reproduces every built-in row.
"""

import csv
import logging
from dataclasses import asdict, dataclass

import pandas as pd

from tofsim.errors import RecordError

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [
    "name",
    "pixels_x",
    "pixels_y",
    "frame_time_s",
    "wavelength_nm",
    "illumination_power_w",
    "modulation_frequency_mhz",
    "distance_noise_percent",
    "precision_mm",
    "range",
    "power_assumed",
    "notes",
]
TABLE_COLUMNS = [
    "name",
    "resolution",
    "frame_time_s",
    "wavelength_nm",
    "illumination_power_mw",
    "modulation_frequency_mhz",
    "precision",
    "fom_nj_per_pixel",
    "notes",
]


@dataclass(frozen=True)
class SensorRecord:
    name: str
    pixels_x: int
    pixels_y: int
    frame_time: float                   # s
    wavelength: str                     # nm, parfois plusieurs valeurs
    illumination_power: float           # W
    modulation_frequency: str = None    # MHz, texte libre ("15, 30", "multiple")
    distance_noise_percent: float = 0.0
    precision_mm: float = None
    range: str = ""
    power_assumed: bool = False
    notes: str = ""

    def __post_init__(self):
        for name in ("pixels_x", "pixels_y", "frame_time", "illumination_power", "distance_noise_percent"):
            if not getattr(self, name) > 0:
                raise RecordError(f"{self.name} : {name} doit être > 0 (reçu {getattr(self, name)})")

    @property
    def pixel_count(self):
        return self.pixels_x * self.pixels_y


# 📁 Tableau de comparaison publié (puissances "assumption" = 800 mW supposés)
BUILTIN_RECORDS = (
    SensorRecord("SR-3000", 176, 144, 0.04, "850", 0.8, "20", 2.375, 19, "0.8 m", True),
    SensorRecord("SR-4000", 176, 144, 0.0185, "850", 0.8, "15, 30", 0.5, 8, "1.60 m", True),
    SensorRecord("PMD[vision]-19k", 160, 120, 0.0667, "870", 4.0, "20", 0.5, 7.5, "1.50 m"),
    SensorRecord("PMD-camcube 3.0", 200, 200, 0.0667, "870", 0.8, "21", 0.5, 8, "1.60 m", True),
    SensorRecord("PMD-camera module", 172, 224, 0.01, "940, 850", 1.0, None, 0.15, 1.5, "1 m"),
    SensorRecord("Kinect V2", 512, 424, 0.0333, "850", 1.0, "multiple", 0.145, 2.18, "1.50 m"),
    SensorRecord("Kim et al", 320, 240, 0.0167, "855", 1.34, "10-100", 0.54, None, "0.75-4 m",
                 notes="bruit donné sur toute la plage"),
    SensorRecord("Keel et al", 640, 480, 0.0167, "940", 2.0, "10-150", 0.30, None, "1.50 m"),
    # 76 800 pixels × 8 µs ; le tableau publié arrondit à 0.614 s
    SensorRecord("This work", 320, 240, 0.6144, "852", 0.03, "31.25", 0.056, 0.84, "1.50 m"),
)


def compute_fom(record):
    """nJ/pixel."""
    if record.pixel_count <= 0:
        raise RecordError(f"{record.name} : nombre de pixels nul")
    energy_per_pixel = record.illumination_power * record.frame_time / record.pixel_count
    return energy_per_pixel * 1e9 * record.distance_noise_percent


def _precision_text(record):
    noise = f"{record.distance_noise_percent:g} %"
    if record.precision_mm is not None:
        noise = f"{record.precision_mm:g} mm / {noise}"
    return f"{noise} @ {record.range}" if record.range else noise


def rank_table(records):
    """Tableau trié par FoM croissant (la puissance supposée est annotée)."""
    rows = []
    for record in records:
        power = f"{record.illumination_power * 1e3:g}" + (" (assumption)" if record.power_assumed else "")
        rows.append(
            {
                "name": record.name,
                "resolution": f"{record.pixels_x} x {record.pixels_y}",
                "frame_time_s": record.frame_time,
                "wavelength_nm": record.wavelength,
                "illumination_power_mw": power,
                "modulation_frequency_mhz": record.modulation_frequency or "Not specified",
                "precision": _precision_text(record),
                "fom_nj_per_pixel": compute_fom(record),
                "notes": record.notes,
            }
        )
    table = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    return table.sort_values("fom_nj_per_pixel", kind="stable").reset_index(drop=True)


def format_table(table):
    view = table.copy()
    view["frame_time_s"] = view["frame_time_s"].map(lambda v: f"{v:.3g}")
    view["fom_nj_per_pixel"] = view["fom_nj_per_pixel"].map(lambda v: f"{v:.2f}")
    return view.drop(columns=["notes"]).to_string(index=False)


def write_table_csv(table, filename):
    table.to_csv(filename, index=False, float_format="%.6g", lineterminator="\n")
    logger.info(f"💾 Tableau FoM écrit : {getattr(filename, 'name', filename)}")


# ─────────────────────────────────────────────────────────────────────────────
# Lecture CSV
# ─────────────────────────────────────────────────────────────────────────────
def _parse_bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "oui", "assumption")


def _optional(text):
    text = (text or "").strip()
    return text or None


def _record_from_row(row, line):
    try:
        precision = _optional(row.get("precision_mm"))
        return SensorRecord(
            name=row["name"].strip(),
            pixels_x=int(row["pixels_x"]),
            pixels_y=int(row["pixels_y"]),
            frame_time=float(row["frame_time_s"]),
            wavelength=(row.get("wavelength_nm") or "").strip(),
            illumination_power=float(row["illumination_power_w"]),
            modulation_frequency=_optional(row.get("modulation_frequency_mhz")),
            distance_noise_percent=float(row["distance_noise_percent"]),
            precision_mm=float(precision) if precision else None,
            range=(row.get("range") or "").strip(),
            power_assumed=_parse_bool(row.get("power_assumed", "")),
            notes=(row.get("notes") or "").strip(),
        )
    except RecordError as e:
        raise RecordError(str(e), line) from e
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise RecordError(f"ligne mal formée ({e})", line) from e


def load_records(path=None):
    """Capteurs depuis un CSV (colonnes RECORD_COLUMNS) ; sans chemin, le tableau publié."""
    if path is None:
        return list(BUILTIN_RECORDS)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            logger.warning(f"⚠️ {path} est vide : aucun capteur")
            return []
        missing = [c for c in ("name", "pixels_x", "pixels_y", "frame_time_s",
                               "illumination_power_w", "distance_noise_percent")
                   if c not in reader.fieldnames]
        if missing:
            raise RecordError(f"colonnes manquantes : {', '.join(missing)}", 1)
        # ligne 1 = en-tête
        records = [_record_from_row(row, reader.line_num) for row in reader]
    if not records:
        logger.warning(f"⚠️ {path} ne contient aucun capteur")
    logger.info(f"✅ {len(records)} capteurs chargés depuis {path}")
    return records


def write_records_csv(records, filename):
    with open(filename, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=RECORD_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in records:
            row = asdict(record)
            writer.writerow(
                {
                    "name": row["name"],
                    "pixels_x": row["pixels_x"],
                    "pixels_y": row["pixels_y"],
                    "frame_time_s": row["frame_time"],
                    "wavelength_nm": row["wavelength"],
                    "illumination_power_w": row["illumination_power"],
                    "modulation_frequency_mhz": row["modulation_frequency"] or "",
                    "distance_noise_percent": row["distance_noise_percent"],
                    "precision_mm": "" if row["precision_mm"] is None else row["precision_mm"],
                    "range": row["range"],
                    "power_assumed": row["power_assumed"],
                    "notes": row["notes"],
                }
            )
    logger.info(f"💾 {len(records)} capteurs écrits : {filename}")
