import os
import json
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from tofsim.errors import ConfigError, SignalError, TofSimError
from tofsim.waveform import Trace

logger = logging.getLogger(__name__)

RASTER_MAGICS = ("FDM1", "FAM1")


# === 1. Logging ===
def setup_logging(level=logging.INFO):
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# === 2. Aléatoire reproductible et parallélisme ===
def trial_rng(seed, index, stream=None):
    """Générateur propre à un essai : ne dépend que de (graine globale, [flux,] index)."""
    key = (int(index),) if stream is None else (int(stream), int(index))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def resolve_threads(cfg=None):
    env = os.getenv("TOFSIM_THREADS", "").strip()
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"TOFSIM_THREADS doit être un entier (reçu {env!r})") from None
    else:
        threads = int((cfg or {}).get("threads", 0))
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def map_ordered(fn, items, threads=1):
    """map() éventuellement parallèle ; les résultats restent dans l'ordre des entrées."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


# === 3. Traces CSV ===
def write_trace_csv(trace, filename):
    with open(filename, "w", newline="\n", encoding="ascii") as f:
        f.write(f"# sample_rate_hz={trace.sample_rate!r}\n")
        for value in np.asarray(trace.samples, dtype=np.float32):
            f.write(f"{float(value):.9g}\n")
    logger.info(f"💾 Trace écrite : {filename} ({len(trace)} échantillons)")


def read_trace_csv(filename):
    # newline=None : LF et CRLF acceptés
    with open(filename, newline=None, encoding="ascii") as f:
        header = f.readline().strip()
        if not header.startswith("# sample_rate_hz="):
            raise SignalError(f"{filename} : en-tête '# sample_rate_hz=' manquant")
        sample_rate = float(header.split("=", 1)[1])
        values = []
        for number, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as e:
                raise SignalError(f"{filename} ligne {number} : valeur invalide {line!r}") from e
    return Trace(np.asarray(values, dtype=np.float64), sample_rate)


# === 4. Rasters FDM1 / FAM1 ===
def write_raster(array, filename, magic="FDM1"):
    if magic not in RASTER_MAGICS:
        raise TofSimError(f"format raster inconnu : {magic}")
    array = np.asarray(array)
    if array.ndim != 2:
        raise TofSimError("un raster doit être 2D (hauteur x largeur)")
    height, width = array.shape
    with open(filename, "wb") as f:
        f.write(f"{magic}\n{width} {height}\n".encode("ascii"))
        f.write(np.ascontiguousarray(array, dtype="<f4").tobytes())
    logger.info(f"💾 Raster {magic} écrit : {filename} ({width}x{height})")


def read_raster(filename):
    """Retourne (magic, tableau float32 hauteur x largeur)."""
    with open(filename, "rb") as f:
        magic = f.readline().decode("ascii").strip()
        if magic not in RASTER_MAGICS:
            raise TofSimError(f"{filename} : en-tête {magic!r} non reconnu")
        width, height = (int(v) for v in f.readline().decode("ascii").split())
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != width * height:
        raise TofSimError(f"{filename} : {data.size} valeurs pour {width}x{height} pixels")
    return magic, data.reshape(height, width)


def write_raster_csv(array, filename):
    np.savetxt(filename, np.asarray(array, dtype=np.float32), delimiter=",", fmt="%.9g")
    logger.info(f"💾 Raster CSV écrit : {filename}")


# === 5. JSON ===
def to_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def write_json(obj, filename):
    with open(filename, "w", encoding="utf-8") as f:
        f.write(to_json(obj))
    logger.info(f"💾 JSON écrit : {filename}")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"type non sérialisable : {type(value).__name__}")
