"""Closed-form path-loss models.

Every model maps ground distance, antenna heights and carrier frequency to a
median path loss in dB (no shadowing term). ``path_loss`` is the vectorized
entry point used by evaluation; ``predict`` is the scalar convenience form.
"""
from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import OutOfValidityRange, ValidationError
from .geo import LinkGeometry

DEFAULT_FREQ_MHZ = 868.1
DEFAULT_SENSOR_HEIGHT_M = 2.0


class CityClass(str, enum.Enum):
    MEDIUM_SMALL = "medium_small"
    METROPOLITAN = "metropolitan"


class ModelKind(str, enum.Enum):
    FSPL = "fspl"
    LDPL = "ldpl"
    DUAL_SLOPE = "dual_slope"
    OKUMURA_HATA = "okumura_hata"
    COST_HATA = "cost_hata"
    EGLI = "egli"
    ECC33 = "ecc33"
    WINNER_PLUS_UMA_NLOS = "winner_plus_uma_nlos"


@dataclass(frozen=True)
class LdplParams:
    n: float
    pl_d0: float
    d0: float = 1000.0
    sigma: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.n) or not math.isfinite(self.pl_d0):
            raise ValidationError("LDPL exponent and intercept must be finite")
        if not self.d0 > 0:
            raise ValidationError(f"d0 must be > 0, got {self.d0}")
        if not self.sigma >= 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")

    def with_d0(self, d0: float) -> "LdplParams":
        """Same line expressed against another reference distance."""
        shift = 10.0 * self.n * math.log10(d0 / self.d0)
        return LdplParams(n=self.n, pl_d0=self.pl_d0 + shift, d0=d0, sigma=self.sigma)


@dataclass(frozen=True)
class DualSlopeParams:
    n1: float
    n2: float
    pl_d0: float
    d0: float
    d_break: float
    sigma: float = 0.0

    def __post_init__(self):
        if not (self.d_break > self.d0 > 0):
            raise ValidationError("dual-slope requires d_break > d0 > 0")
        if not self.sigma >= 0:
            raise ValidationError("sigma must be >= 0")


@dataclass(frozen=True)
class Environment:
    freq_mhz: float = DEFAULT_FREQ_MHZ
    h_gw: float = 30.0
    h_sensor: float = DEFAULT_SENSOR_HEIGHT_M
    city_class: CityClass = CityClass.MEDIUM_SMALL

    def __post_init__(self):
        if not self.freq_mhz > 0:
            raise ValidationError("frequency must be > 0")
        if not (self.h_gw > 0 and self.h_sensor > 0):
            raise ValidationError("antenna heights must be > 0")


_PARAM_TYPES = {ModelKind.LDPL: LdplParams, ModelKind.DUAL_SLOPE: DualSlopeParams}


@dataclass(frozen=True)
class ModelSpec:
    """One catalog entry. ``sigma_db`` is the shadowing used by non-LDPL kinds."""

    name: str
    kind: ModelKind
    params: LdplParams | DualSlopeParams | None = None
    sigma_db: float = 0.0

    def __post_init__(self):
        expected = _PARAM_TYPES.get(self.kind)
        if expected is None and self.params is not None:
            raise ValidationError(f"{self.kind.value} takes no parameters")
        if expected is not None and not isinstance(self.params, expected):
            raise ValidationError(f"{self.kind.value} requires {expected.__name__}")

    @property
    def sigma(self) -> float:
        if self.params is not None:
            return self.params.sigma
        return self.sigma_db

    @classmethod
    def fspl(cls, name: str = "FSPL") -> "ModelSpec":
        return cls(name, ModelKind.FSPL)

    @classmethod
    def ldpl(cls, name: str, n: float, pl_d0: float, d0: float = 1000.0, sigma: float = 0.0) -> "ModelSpec":
        return cls(name, ModelKind.LDPL, LdplParams(n, pl_d0, d0, sigma))


# --------------------------------------------------------------------------
# formulas; d in meters, f in MHz, heights in meters
# --------------------------------------------------------------------------

def _fspl(d, f):
    return 32.45 + 20.0 * np.log10(d / 1000.0) + 20.0 * np.log10(f)


def _ldpl(d, p: LdplParams):
    return p.pl_d0 + 10.0 * p.n * np.log10(d / p.d0)


def _dual_slope(d, p: DualSlopeParams):
    near = p.pl_d0 + 10.0 * p.n1 * np.log10(d / p.d0)
    at_break = p.pl_d0 + 10.0 * p.n1 * math.log10(p.d_break / p.d0)
    far = at_break + 10.0 * p.n2 * np.log10(d / p.d_break)
    return np.where(d <= p.d_break, near, far)


def _hata_mobile_correction(f, h_m):
    lf = np.log10(f)
    return (1.1 * lf - 0.7) * h_m - (1.56 * lf - 0.8)


def _okumura_hata(d, f, h_b, h_m):
    return (
        69.55
        + 26.16 * np.log10(f)
        - 13.82 * np.log10(h_b)
        - _hata_mobile_correction(f, h_m)
        + (44.9 - 6.55 * np.log10(h_b)) * np.log10(d / 1000.0)
    )


def _cost_hata(d, f, h_b, h_m, city: CityClass):
    c = 3.0 if city is CityClass.METROPOLITAN else 0.0
    return (
        46.3
        + 33.9 * np.log10(f)
        - 13.82 * np.log10(h_b)
        - _hata_mobile_correction(f, h_m)
        + (44.9 - 6.55 * np.log10(h_b)) * np.log10(d / 1000.0)
        + c
    )


def _egli(d, f, h_b, h_m):
    return 20.0 * np.log10(f) + 40.0 * np.log10(d / 1000.0) - 20.0 * np.log10(h_b) + 76.3 - 10.0 * np.log10(h_m)


def _ecc33(d, f, h_b, h_m):
    # medium-city variant
    d_km = d / 1000.0
    lg = np.log10(f / 1000.0)
    ld = np.log10(d_km)
    a_fs = 92.4 + 20.0 * ld + 20.0 * lg
    a_bm = 20.41 + 9.83 * ld + 7.894 * lg + 9.56 * lg * lg
    g_b = np.log10(h_b / 200.0) * (13.958 + 5.8 * ld * ld)
    g_r = (42.57 + 13.7 * lg) * (np.log10(h_m) - 0.585)
    return a_fs + a_bm - g_b - g_r


def _winner_plus_uma_nlos(d, f, h_b):
    return (44.9 - 6.55 * np.log10(h_b)) * np.log10(d) + 34.46 + 5.83 * np.log10(h_b) + 23.0 * np.log10(f / 1000.0 / 5.0)


# (freq MHz), (h_b m), (h_m m), (d m); None = unbounded
_VALIDITY = {
    ModelKind.OKUMURA_HATA: ((150, 1500), (30, 200), (1, 10), (1000, 20000)),
    ModelKind.COST_HATA: ((1500, 2000), (30, 200), (1, 10), (1000, 20000)),
    ModelKind.EGLI: ((40, 900), None, (None, 10), None),
    ModelKind.ECC33: ((700, 3500), (20, 200), (1, 10), (1000, 10000)),
    ModelKind.WINNER_PLUS_UMA_NLOS: ((2000, 6000), (25, 35), None, (50, 5000)),
}


def validity_issues(model: ModelSpec, distance_m, h_gw, h_sensor, freq_mhz: float) -> list[str]:
    """Human-readable list of validity-window violations (empty when in range)."""
    window = _VALIDITY.get(model.kind)
    if window is None:
        return []
    labels = ("frequency [MHz]", "gateway height [m]", "sensor height [m]", "distance [m]")
    values = (
        np.atleast_1d(freq_mhz),
        np.atleast_1d(h_gw),
        np.atleast_1d(h_sensor),
        np.atleast_1d(distance_m),
    )
    issues = []
    for label, rng, vals in zip(labels, window, values):
        if rng is None or vals.size == 0:
            continue
        lo, hi = rng
        vmin, vmax = float(np.min(vals)), float(np.max(vals))
        if (lo is not None and vmin < lo) or (hi is not None and vmax > hi):
            issues.append(f"{model.name}: {label} spans [{vmin:g}, {vmax:g}], valid [{lo}, {hi}]")
    return issues


def path_loss(
    model: ModelSpec,
    distance_m,
    h_gw=30.0,
    h_sensor=DEFAULT_SENSOR_HEIGHT_M,
    freq_mhz: float = DEFAULT_FREQ_MHZ,
    city_class: CityClass = CityClass.MEDIUM_SMALL,
    warn: bool = True,
) -> np.ndarray:
    """Median path loss in dB for arrays of distances and antenna heights."""
    d = np.asarray(distance_m, dtype=np.float64)
    if np.any(d <= 0):
        raise ValidationError("distances must be > 0")
    h_b = np.asarray(h_gw, dtype=np.float64)
    h_m = np.asarray(h_sensor, dtype=np.float64)
    f = float(freq_mhz)
    if warn:
        for msg in validity_issues(model, d, h_b, h_m, f):
            warnings.warn(msg, OutOfValidityRange, stacklevel=2)

    kind = model.kind
    if kind is ModelKind.FSPL:
        out = _fspl(d, f)
    elif kind is ModelKind.LDPL:
        out = _ldpl(d, model.params)
    elif kind is ModelKind.DUAL_SLOPE:
        out = _dual_slope(d, model.params)
    elif kind is ModelKind.OKUMURA_HATA:
        out = _okumura_hata(d, f, h_b, h_m)
    elif kind is ModelKind.COST_HATA:
        out = _cost_hata(d, f, h_b, h_m, CityClass(city_class))
    elif kind is ModelKind.EGLI:
        out = _egli(d, f, h_b, h_m)
    elif kind is ModelKind.ECC33:
        out = _ecc33(d, f, h_b, h_m)
    elif kind is ModelKind.WINNER_PLUS_UMA_NLOS:
        out = _winner_plus_uma_nlos(d, f, h_b)
    else:  # pragma: no cover
        raise ValidationError(f"unsupported model kind {kind}")
    return np.broadcast_to(out, np.broadcast_shapes(d.shape, h_b.shape, h_m.shape)).astype(np.float64)


def predict(model: ModelSpec, link: LinkGeometry, env: Environment, warn: bool = True) -> float:
    """Median path loss for a single link. Heights come from ``link``."""
    return float(
        path_loss(model, link.distance, link.h_gw, link.h_sensor, env.freq_mhz, env.city_class, warn=warn)
    )


def fspl_db(distance_m, freq_mhz: float = DEFAULT_FREQ_MHZ):
    return _fspl(np.asarray(distance_m, dtype=np.float64), float(freq_mhz))


def sample_with_shadowing(model: ModelSpec, link: LinkGeometry, env: Environment, rng_seed, size=None):
    """Median prediction plus a zero-mean Gaussian shadowing draw.

    Returns a float for ``size=None`` and an array otherwise.
    """
    median = predict(model, link, env)
    sigma = model.sigma
    if sigma == 0.0:
        return median if size is None else np.full(size, median)
    draw = np.random.default_rng(rng_seed).normal(0.0, sigma, size=size)
    return median + (float(draw) if size is None else draw)


# --------------------------------------------------------------------------
# catalog files
# --------------------------------------------------------------------------

def model_to_record(model: ModelSpec) -> dict:
    params = None
    if model.params is not None:
        params = dict(model.params.__dict__)
    rec = {"name": model.name, "variant": model.kind.value, "params": params}
    if model.params is None and model.sigma_db:
        rec["sigma_db"] = model.sigma_db
    return rec


def model_from_record(rec: dict) -> ModelSpec:
    try:
        kind = ModelKind(rec["variant"])
        name = rec["name"]
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad catalog record {rec!r}: {exc}") from exc
    params = rec.get("params")
    ptype = _PARAM_TYPES.get(kind)
    if ptype is not None:
        if params is None:
            raise ValidationError(f"catalog model {name!r} has no coefficients configured")
        try:
            params = ptype(**params)
        except TypeError as exc:
            raise ValidationError(f"catalog model {name!r}: {exc}") from exc
    return ModelSpec(name, kind, params, float(rec.get("sigma_db", 0.0)))


def load_catalog(path: str | Path | None = None) -> list[ModelSpec]:
    """Read a model catalog; entries without coefficients are skipped with a warning.

    ``path=None`` loads the shipped default catalog.
    """
    if path is None:
        text = resources.files("lorapl.data").joinpath("default_catalog.json").read_text()
    else:
        text = Path(path).read_text()
    records = json.loads(text)
    if not isinstance(records, list):
        raise ValidationError("catalog must be a JSON list of {name, variant, params}")
    models = []
    for rec in records:
        if rec.get("params") is None and rec.get("variant") in (ModelKind.LDPL.value, ModelKind.DUAL_SLOPE.value):
            warnings.warn(f"skipping {rec.get('name')!r}: coefficients not configured", stacklevel=2)
            continue
        models.append(model_from_record(rec))
    if len({m.name for m in models}) != len(models):
        raise ValidationError("catalog model names must be unique")
    return models


def save_catalog(models, path: str | Path) -> None:
    Path(path).write_text(json.dumps([model_to_record(m) for m in models], indent=2) + "\n")


OULU = ModelSpec.ldpl("Oulu", n=2.65, pl_d0=132.25)
BONN = ModelSpec.ldpl("Bonn", n=1.58, pl_d0=132.41, sigma=9.9)
