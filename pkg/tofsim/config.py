import copy
import json
import logging

from dotenv import load_dotenv

from tofsim.errors import ConfigError

load_dotenv()
logger = logging.getLogger(__name__)

# 📁 Étape 1 : Configuration initiale (valeurs du banc de mesure publié)
config = {
    "modulation_frequency": 31.25e6,   # Hz
    "sample_rate": 625e6,              # Hz, numériseur
    "integration_time": 16e-6,         # s par mesure de distance
    "laser": {"power": 0.03, "wavelength": 852e-9},
    "apd": {"responsivity": 23.0, "gain": 1e5, "multiplication": 50.0},
    "digitizer": {"bits": 10, "full_scale": 2.0},
    "demod": {"kind": "sine", "amplitude": 0.4704, "offset": 0.0099},
    "noise": {"pseudo_electrons": 0.0, "gaussian_threshold": 1000.0},
    "scanner": {
        "reference_amplitude": 0.4,     # V reçus à la distance de référence
        "reference_distance": 1.5,
        "reference_reflectivity": 0.95,
        "modulation_depth": 0.526 / 0.572,
        "horizontal_fov_deg": 40.0,
        "vertical_fov_deg": 30.0,
    },
    "precision": {"coefficient": "sinusoidal"},
    "trials": 2000,
    "seed": 0,
    "threads": 0,                      # 0 = tous les cœurs ; TOFSIM_THREADS prime
}

# 📁 Étape 2 : Champs qui doivent être strictement positifs
POSITIVE_FIELDS = [
    ("modulation_frequency",),
    ("sample_rate",),
    ("integration_time",),
    ("laser", "power"),
    ("laser", "wavelength"),
    ("apd", "responsivity"),
    ("apd", "gain"),
    ("apd", "multiplication"),
    ("digitizer", "full_scale"),
    ("demod", "amplitude"),
    ("scanner", "reference_amplitude"),
    ("scanner", "reference_distance"),
    ("scanner", "reference_reflectivity"),
    ("scanner", "modulation_depth"),
    ("scanner", "horizontal_fov_deg"),
    ("scanner", "vertical_fov_deg"),
    ("noise", "gaussian_threshold"),
    ("trials",),
]


def _merge(base, overlay, path=""):
    for key, value in overlay.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"clé de configuration inconnue : {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where} doit être un objet")
            _merge(base[key], value, where)
        else:
            base[key] = value


def _lookup(cfg, keys):
    value = cfg
    for key in keys:
        value = value[key]
    return value


def validate_config(cfg):
    for keys in POSITIVE_FIELDS:
        value = _lookup(cfg, keys)
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
            raise ConfigError(f"{'.'.join(keys)} doit être > 0 (reçu {value!r})")
    bits = cfg["digitizer"]["bits"]
    if not isinstance(bits, int) or not 2 <= bits <= 24:
        raise ConfigError(f"digitizer.bits doit être un entier dans [2, 24] (reçu {bits!r})")
    if cfg["demod"]["kind"] not in ("sine", "square"):
        raise ConfigError(f"demod.kind inconnu : {cfg['demod']['kind']!r}")
    if cfg["demod"]["offset"] < 0:
        raise ConfigError("demod.offset doit être >= 0")
    if cfg["noise"]["pseudo_electrons"] < 0:
        raise ConfigError("noise.pseudo_electrons doit être >= 0")
    if cfg["precision"]["coefficient"] not in ("published", "sinusoidal"):
        raise ConfigError(f"precision.coefficient inconnu : {cfg['precision']['coefficient']!r}")
    if not 0 < cfg["scanner"]["reference_reflectivity"] <= 1:
        raise ConfigError("scanner.reference_reflectivity doit être dans (0, 1]")
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed doit être un entier 64 bits non signé (reçu {seed!r})")
    if not isinstance(cfg["threads"], int) or cfg["threads"] < 0:
        raise ConfigError("threads doit être un entier >= 0")
    if cfg["sample_rate"] <= 2 * cfg["modulation_frequency"]:
        raise ConfigError("sample_rate doit dépasser 2 x modulation_frequency (Nyquist)")
    return cfg


def load_config(path=None):
    """Retourne une copie des valeurs par défaut, surchargée par le JSON `path` s'il est fourni."""
    cfg = copy.deepcopy(config)
    if path:
        with open(path, encoding="utf-8") as f:
            try:
                overlay = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"JSON invalide dans {path} : {e}") from e
        if not isinstance(overlay, dict):
            raise ConfigError(f"{path} doit contenir un objet JSON")
        _merge(cfg, overlay)
        logger.info(f"✅ Configuration chargée depuis {path}")
    from tofsim.utils import resolve_threads

    resolve_threads(cfg)  # TOFSIM_THREADS invalide -> ConfigError
    return validate_config(cfg)


# ─────────────────────────────────────────────────────────────────────────────
# Construction des objets typés à partir du dict
# ─────────────────────────────────────────────────────────────────────────────
def chain_from_config(cfg=None):
    from tofsim.radiometry import ApdChain

    cfg = cfg or config
    return ApdChain(
        responsivity=cfg["apd"]["responsivity"],
        transimpedance_gain=cfg["apd"]["gain"],
        multiplication=cfg["apd"]["multiplication"],
        wavelength=cfg["laser"]["wavelength"],
    )


def demod_spec_from_config(cfg=None):
    from tofsim.waveform import SignalSpec

    cfg = cfg or config
    if cfg["demod"]["kind"] == "square":
        # signal carré type pixel CMOS : 0/1 V, offset 0.5
        return SignalSpec("square", 0.5, 0.5, cfg["modulation_frequency"], 0.0)
    return SignalSpec(
        "sine",
        cfg["demod"]["amplitude"],
        cfg["demod"]["offset"],
        cfg["modulation_frequency"],
        0.0,
    )


def setup_from_config(cfg=None, **overrides):
    """MeasurementSetup pré-rempli ; `overrides` remplace n'importe quel champ."""
    from tofsim.simlab import MeasurementSetup

    cfg = cfg or config
    fields = {
        "true_distance": cfg["scanner"]["reference_distance"],
        "received_amplitude": cfg["scanner"]["reference_amplitude"],
        "received_offset": cfg["scanner"]["reference_amplitude"] / cfg["scanner"]["modulation_depth"],
        "integration_time": cfg["integration_time"],
        "seed": cfg["seed"],
        "chain": chain_from_config(cfg),
        "digitizer": (cfg["digitizer"]["bits"], cfg["digitizer"]["full_scale"]),
        "modulation_frequency": cfg["modulation_frequency"],
        "sample_rate": cfg["sample_rate"],
        "demod": demod_spec_from_config(cfg),
        "gaussian_threshold": cfg["noise"]["gaussian_threshold"],
        "pseudo_electrons": cfg["noise"]["pseudo_electrons"],
    }
    fields.update(overrides)
    return MeasurementSetup(**fields)
