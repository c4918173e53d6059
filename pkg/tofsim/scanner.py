"""
Raster-scanning acquisition
===========================
Parametric scenes (planes, spheres, finite cylinders, axis-aligned boxes),
vectorized ray casting from a scanner at the origin looking along +z, the
inverse-square received-amplitude law, per-pixel measurement simulation and
depth / amplitude frames with frame-time accounting.
"""

import json
import math
import logging
from dataclasses import dataclass, replace

import numpy as np

from tofsim.demod import CorrelationSet, ambiguity_range, distance_to_phase, extract
from tofsim.errors import SceneError
from tofsim.utils import map_ordered
from tofsim.waveform import QUADRATURE_PHASES

logger = logging.getLogger(__name__)

PRIMITIVE_TYPES = ("plane", "sphere", "cylinder", "box")
EPS = 1e-9
DEFAULT_MODULATION_DEPTH = 0.526 / 0.572


# ─────────────────────────────────────────────────────────────────────────────
# Types
# ─────────────────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class Primitive:
    type: str
    position: tuple
    size: tuple = ()
    reflectivity: float = 0.95
    normal: tuple = (0.0, 0.0, -1.0)    # plan
    axis: tuple = (0.0, 1.0, 0.0)       # cylindre
    checker_period: float = None
    checker_reflectivity: float = None

    def __post_init__(self):
        if self.type not in PRIMITIVE_TYPES:
            raise SceneError(f"primitive inconnue : {self.type!r}")
        if not 0 < self.reflectivity <= 1:
            raise SceneError(f"réflectivité hors de (0, 1] : {self.reflectivity}")
        object.__setattr__(self, "position", _vector(self.position, "position"))
        object.__setattr__(self, "normal", _unit(self.normal, "normal"))
        object.__setattr__(self, "axis", _unit(self.axis, "axis"))
        size = tuple(float(v) for v in self.size)
        expected = {"plane": 0, "sphere": 1, "cylinder": 2, "box": 3}[self.type]
        if len(size) != expected or any(not v > 0 for v in size):
            raise SceneError(f"{self.type} : {expected} dimension(s) > 0 attendue(s), reçu {list(size)}")
        object.__setattr__(self, "size", size)
        if self.checker_period is not None:
            if self.type != "plane":
                raise SceneError("texture damier réservée aux plans")
            if not self.checker_period > 0 or not 0 < (self.checker_reflectivity or 0) <= 1:
                raise SceneError("damier : période > 0 et réflectivité dans (0, 1] requises")


@dataclass(frozen=True)
class Scene:
    primitives: tuple

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not self.primitives:
            raise SceneError("une scène contient au moins une primitive")

    @classmethod
    def from_entries(cls, entries):
        if not isinstance(entries, list):
            raise SceneError("la scène doit être une liste JSON de primitives")
        return cls(tuple(_primitive_from_entry(entry, i) for i, entry in enumerate(entries)))

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as f:
            try:
                entries = json.load(f)
            except json.JSONDecodeError as e:
                raise SceneError(f"JSON invalide dans {path} : {e}") from e
        scene = cls.from_entries(entries)
        logger.info(f"✅ Scène chargée : {path} ({len(scene.primitives)} primitives)")
        return scene

    def intersect(self, directions):
        """Distance radiale et réflectivité du premier impact pour chaque rayon (inf / nan si aucun)."""
        directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        best = np.full(directions.shape[0], np.inf)
        rho = np.full(directions.shape[0], np.nan)
        for primitive in self.primitives:
            t = _HITS[primitive.type](primitive, directions)
            closer = t < best
            if np.any(closer):
                best[closer] = t[closer]
                rho[closer] = _reflectivity(primitive, directions[closer], t[closer])
        return best, rho


@dataclass(frozen=True)
class RasterGrid:
    width: int
    height: int
    horizontal_fov: float   # rad
    vertical_fov: float     # rad

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height or self.width < 1 or self.height < 1:
            raise SceneError(f"résolution invalide : {self.width}x{self.height}")
        for name in ("horizontal_fov", "vertical_fov"):
            if not 0 < getattr(self, name) < math.pi:
                raise SceneError(f"{name} doit être dans (0, π)")

    @property
    def pixels(self):
        return int(self.width) * int(self.height)

    def directions(self):
        """Rayons unitaires (hauteur·largeur, 3), ligne par ligne, ligne 0 en haut (y vers le bas)."""
        w, h = int(self.width), int(self.height)
        tx = np.tan(-self.horizontal_fov / 2 + (np.arange(w) + 0.5) * self.horizontal_fov / w)
        ty = np.tan(-self.vertical_fov / 2 + (np.arange(h) + 0.5) * self.vertical_fov / h)
        x, y = np.meshgrid(tx, ty)
        rays = np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)
        return rays / np.linalg.norm(rays, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class DepthFrame:
    depth: np.ndarray           # m, NaN = pas de retour
    amplitude: np.ndarray       # V²
    saturated: np.ndarray
    integration_time: float
    modulation_frequency: float
    frame_time: float
    seed: int = 0
    noise: bool = True

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def height(self):
        return self.depth.shape[0]

    def metadata(self):
        return {
            "resolution": [self.width, self.height],
            "t_int_s": self.integration_time,
            "f_hz": self.modulation_frequency,
            "frame_time_s": self.frame_time,
            "saturated_pixels": int(np.count_nonzero(self.saturated)),
            "returned_pixels": int(np.count_nonzero(np.isfinite(self.depth))),
            "seed": self.seed,
            "noise": self.noise,
        }


@dataclass(frozen=True, eq=False)
class ErrorReport:
    errors: np.ndarray
    counts: np.ndarray
    bin_edges: np.ndarray
    max: float
    mean: float
    rms: float
    missing: int = 0

    def to_dict(self):
        return {
            "pixels": int(self.errors.size),
            "max_m": self.max,
            "mean_m": self.mean,
            "rms_m": self.rms,
            "missing": self.missing,
            "histogram": {"counts": self.counts.tolist(), "bin_edges_m": self.bin_edges.tolist()},
        }


# ─────────────────────────────────────────────────────────────────────────────
# Géométrie
# ─────────────────────────────────────────────────────────────────────────────
def _vector(value, name):
    try:
        v = tuple(float(x) for x in value)
    except (TypeError, ValueError) as e:
        raise SceneError(f"{name} : vecteur 3D attendu") from e
    if len(v) != 3:
        raise SceneError(f"{name} : vecteur 3D attendu, reçu {len(v)} composantes")
    return v


def _unit(value, name):
    v = np.asarray(_vector(value, name))
    norm = np.linalg.norm(v)
    if norm == 0:
        raise SceneError(f"{name} : vecteur nul")
    return tuple(float(x) for x in v / norm)


def _primitive_from_entry(entry, index):
    if not isinstance(entry, dict):
        raise SceneError(f"primitive {index} : objet JSON attendu")
    unknown = set(entry) - {"type", "pose", "size", "reflectivity", "checker"}
    if unknown:
        raise SceneError(f"primitive {index} : clés inconnues {sorted(unknown)}")
    pose = entry.get("pose", {})
    if isinstance(pose, list):
        pose = {"position": pose}
    if not isinstance(pose, dict):
        raise SceneError(f"primitive {index} : pose doit être un objet ou une liste [x, y, z]")
    kwargs = {
        "type": entry.get("type"),
        "position": pose.get("position", (0.0, 0.0, 0.0)),
        "size": entry.get("size", ()),
        "reflectivity": entry.get("reflectivity", 0.95),
    }
    if "normal" in pose:
        kwargs["normal"] = pose["normal"]
    if "axis" in pose:
        kwargs["axis"] = pose["axis"]
    if "checker" in entry:
        if not isinstance(entry["checker"], dict):
            raise SceneError(f"primitive {index} : checker doit être un objet {{period, reflectivity}}")
        kwargs["checker_period"] = entry["checker"].get("period")
        kwargs["checker_reflectivity"] = entry["checker"].get("reflectivity")
    try:
        return Primitive(**kwargs)
    except SceneError as e:
        raise SceneError(f"primitive {index} : {e}") from e


def _nearest(*candidates):
    # plus petite racine > 0, inf sinon
    stacked = np.stack(candidates)
    stacked = np.where(np.isfinite(stacked) & (stacked > EPS), stacked, np.inf)
    return stacked.min(axis=0)


def _hit_plane(p, d):
    n = np.asarray(p.normal)
    denom = d @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(denom) > EPS, (np.asarray(p.position) @ n) / denom, np.inf)
    return _nearest(t)


def _hit_sphere(p, d):
    c = np.asarray(p.position)
    b = d @ c
    disc = b**2 - (c @ c - p.size[0] ** 2)
    root = np.sqrt(np.where(disc >= 0, disc, np.nan))
    return _nearest(b - root, b + root)


def _hit_cylinder(p, d):
    c = np.asarray(p.position)
    a = np.asarray(p.axis)
    radius, height = p.size
    w = -c
    da = d @ a
    d_perp = d - da[:, None] * a
    w_perp = w - (w @ a) * a
    qa = np.einsum("ij,ij->i", d_perp, d_perp)
    qb = 2 * (d_perp @ w_perp)
    qc = w_perp @ w_perp - radius**2
    disc = qb**2 - 4 * qa * qc
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.sqrt(np.where((disc >= 0) & (qa > EPS), disc, np.nan))
        sides = []
        for t in ((-qb - root) / (2 * qa), (-qb + root) / (2 * qa)):
            along = w @ a + t * da
            sides.append(np.where(np.abs(along) <= height / 2, t, np.inf))
        caps = []
        for sign in (-1.0, 1.0):
            center = c + sign * height / 2 * a
            t = np.where(np.abs(da) > EPS, (center @ a) / da, np.inf)
            hit = d * t[:, None] - center
            caps.append(np.where(np.einsum("ij,ij->i", hit, hit) <= radius**2, t, np.inf))
    return _nearest(*sides, *caps)


def _hit_box(p, d):
    c = np.asarray(p.position)
    half = np.asarray(p.size) / 2
    lo, hi = c - half, c + half
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = lo / d
        t2 = hi / d
    parallel = d == 0
    inside = (lo <= 0) & (0 <= hi)
    t_min = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_max = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    near = t_min.max(axis=1)
    far = t_max.min(axis=1)
    valid = near <= far
    # origine dans la boîte : on sort par la face lointaine
    t = np.where(near > EPS, near, far)
    return _nearest(np.where(valid, t, np.inf))


_HITS = {"plane": _hit_plane, "sphere": _hit_sphere, "cylinder": _hit_cylinder, "box": _hit_box}


def _reflectivity(p, d, t):
    if p.checker_period is None:
        return np.full(t.shape, p.reflectivity)
    n = np.asarray(p.normal)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(n, helper)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    local = d * t[:, None] - np.asarray(p.position)
    parity = np.floor(local @ u / p.checker_period) + np.floor(local @ v / p.checker_period)
    return np.where(np.mod(parity, 2) == 0, p.reflectivity, p.checker_reflectivity)


def raycast(scene, direction):
    """(distance, réflectivité) du premier impact le long de `direction`, ou None."""
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1) > 1e-9:
        raise SceneError("la direction du rayon doit être unitaire")
    t, rho = scene.intersect(direction[None, :])
    if not np.isfinite(t[0]):
        return None
    return float(t[0]), float(rho[0])


# ─────────────────────────────────────────────────────────────────────────────
# Bilan radiométrique
# ─────────────────────────────────────────────────────────────────────────────
def calibrate(reference_amplitude, reflectivity, distance, power):
    """Constante cal telle que (ρ, d, P) de référence donne R = reference_amplitude."""
    if not (reference_amplitude > 0 and reflectivity > 0 and distance > 0 and power > 0):
        raise SceneError("calibration : toutes les grandeurs de référence doivent être > 0")
    return reference_amplitude * distance**2 / (reflectivity * power)


def received_amplitude(rho, d, power, cal, modulation_depth=DEFAULT_MODULATION_DEPTH, full_scale=2.0):
    """R = cal·ρ·P/d², R_DC = R/m, écrêtés à la demi pleine échelle ; retourne (R, R_DC, saturé)."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise SceneError("distance nulle ou négative : amplitude infinie")
    r = cal * np.asarray(rho, dtype=np.float64) * power / d**2
    r_dc = r / modulation_depth
    limit = full_scale / 2
    saturated = r + r_dc > limit
    r, r_dc = np.minimum(r, limit), np.minimum(r_dc, limit)
    if r.ndim == 0:
        return float(r), float(r_dc), bool(saturated)
    return r, r_dc, saturated


# ─────────────────────────────────────────────────────────────────────────────
# Rendu
# ─────────────────────────────────────────────────────────────────────────────
def frame_time(grid, t_int):
    return grid.width * grid.height * t_int


def _noiseless_pixel(r, r_dc, d, m, m_dc, t_int, f):
    phase = distance_to_phase(d, f)
    c = [r * m / 2 * math.cos(phase + phi_n) + r_dc * m_dc for phi_n in QUADRATURE_PHASES]
    return extract(CorrelationSet(*c, t_int, f))


def render_frame(scene, grid, t_int, noise=True, seed=0, cfg=None, threads=1):
    from tofsim.config import config as defaults, setup_from_config
    from tofsim.simlab import demod_lines, simulate_measurement

    cfg = cfg or defaults
    scan = cfg["scanner"]
    f = cfg["modulation_frequency"]
    power = cfg["laser"]["power"]
    cal = calibrate(scan["reference_amplitude"], scan["reference_reflectivity"], scan["reference_distance"], power)

    distances, rho = scene.intersect(grid.directions())
    hit = np.isfinite(distances)
    r = np.zeros(distances.size)
    r_dc = np.zeros(distances.size)
    saturated = np.zeros(distances.size, dtype=bool)
    if np.any(hit):
        r[hit], r_dc[hit], saturated[hit] = received_amplitude(
            rho[hit], distances[hit], power, cal, scan["modulation_depth"], cfg["digitizer"]["full_scale"]
        )
    if np.any(saturated):
        logger.warning(f"⚠️ {int(saturated.sum())} pixels saturés (démodulés quand même)")

    base = setup_from_config(cfg, integration_time=t_int, seed=seed, noise=noise)
    m, m_dc = demod_lines(base.demod)
    width = int(grid.width)

    def pixel(index):
        if not hit[index]:
            return math.nan, 0.0
        if noise:
            setup = replace(
                base, true_distance=float(distances[index]),
                received_amplitude=float(r[index]), received_offset=float(r_dc[index]),
            )
            result = simulate_measurement(setup, index)
        else:
            result = _noiseless_pixel(r[index], r_dc[index], distances[index], m, m_dc, t_int, f)
        return result.distance, result.amplitude

    def row(y):
        return [pixel(y * width + x) for x in range(width)]

    rows = map_ordered(row, range(int(grid.height)), threads)
    values = np.asarray(rows, dtype=np.float64)
    frame = DepthFrame(
        depth=values[..., 0],
        amplitude=values[..., 1],
        saturated=saturated.reshape(int(grid.height), width),
        integration_time=t_int,
        modulation_frequency=f,
        frame_time=frame_time(grid, t_int),
        seed=seed,
        noise=noise,
    )
    logger.info(
        f"✅ Trame {grid.width}x{grid.height} rendue : {int(hit.sum())} retours, "
        f"temps de trame {frame.frame_time:.4g} s"
    )
    return frame


def error_report(frame, scene, grid, bins=20):
    """Erreur absolue de profondeur contre la vérité terrain analytique (repliée sur c/2f)."""
    if (frame.width, frame.height) != (grid.width, grid.height):
        raise SceneError(
            f"résolution de la trame {frame.width}x{frame.height} ≠ grille {grid.width}x{grid.height}"
        )
    truth, _ = scene.intersect(grid.directions())
    truth = truth.reshape(frame.depth.shape)
    span = ambiguity_range(frame.modulation_frequency)
    both = np.isfinite(truth) & np.isfinite(frame.depth)
    missing = int(np.count_nonzero(np.isfinite(truth) != np.isfinite(frame.depth)))
    if missing:
        logger.warning(f"⚠️ {missing} pixels sans correspondance entre trame et vérité terrain")

    diff = frame.depth[both] - np.mod(truth[both], span)
    errors = np.abs(np.mod(diff + span / 2, span) - span / 2)
    if errors.size == 0:
        counts, edges = np.histogram(errors, bins=bins, range=(0.0, 1.0))
        return ErrorReport(errors, counts, edges, 0.0, 0.0, 0.0, missing)
    counts, edges = np.histogram(errors, bins=bins)
    return ErrorReport(
        errors=errors,
        counts=counts,
        bin_edges=edges,
        max=float(errors.max()),
        mean=float(errors.mean()),
        rms=float(np.sqrt(np.mean(errors**2))),
        missing=missing,
    )
