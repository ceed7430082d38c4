"""Synthetic measurement campaigns with a known ground-truth model."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geo import GeoPoint, destination_point
from .models import DEFAULT_FREQ_MHZ, DEFAULT_SENSOR_HEIGHT_M, CityClass, ModelSpec, path_loss
from .pipeline import Gateway, LinkBudget, Sample, write_gateways, write_samples

EPOCH = datetime(2020, 1, 1, tzinfo=timezone.utc)


class DistanceLaw(str, enum.Enum):
    LOG_UNIFORM = "log_uniform"
    UNIFORM = "uniform"


def default_gateways() -> list[Gateway]:
    """Three gateways spread over a city-sized area."""
    return [
        Gateway("gw-a", GeoPoint(50.7374, 7.0982), 30.0, 3.0),
        Gateway("gw-b", GeoPoint(50.7010, 7.1430), 35.0, 3.0),
        Gateway("gw-c", GeoPoint(50.7600, 7.1800), 40.0, 3.0),
    ]


@dataclass(frozen=True)
class SynthConfig:
    ground_truth: ModelSpec
    sigma_db: float = 0.0
    gateways: tuple[Gateway, ...] = field(default_factory=lambda: tuple(default_gateways()))
    count: int = 10_000
    distance_law: DistanceLaw = DistanceLaw.LOG_UNIFORM
    min_distance_m: float = 50.0
    max_distance_m: float = 13_000.0
    seed: int = 0
    budget: LinkBudget = field(default_factory=LinkBudget)
    freq_mhz: float = DEFAULT_FREQ_MHZ
    h_sensor: float = DEFAULT_SENSOR_HEIGHT_M
    city_class: CityClass = CityClass.MEDIUM_SMALL
    altitude_m: float = 60.0

    def __post_init__(self):
        if not 0 < self.min_distance_m < self.max_distance_m:
            raise ValidationError("need 0 < min_distance_m < max_distance_m")
        if self.count <= 0:
            raise ValidationError("count must be > 0")
        if self.sigma_db < 0:
            raise ValidationError("sigma_db must be >= 0")
        if not self.gateways:
            raise ValidationError("at least one gateway is required")


@dataclass
class SynthCampaign:
    samples: list[Sample]
    gateways: dict[str, Gateway]
    distance_m: np.ndarray
    true_path_loss_db: np.ndarray


@dataclass
class SynthArrays:
    gateway_index: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    distance_m: np.ndarray
    true_path_loss_db: np.ndarray
    path_loss_db: np.ndarray
    rpp_dbm: np.ndarray


def generate_arrays(config: SynthConfig) -> SynthArrays:
    """Array form of :func:`generate`; same draws for the same seed."""
    rng = np.random.default_rng(config.seed)
    n = config.count
    gws = list(config.gateways)
    which = rng.integers(0, len(gws), size=n)
    if config.distance_law is DistanceLaw.LOG_UNIFORM:
        d = np.exp(rng.uniform(np.log(config.min_distance_m), np.log(config.max_distance_m), size=n))
    else:
        d = rng.uniform(config.min_distance_m, config.max_distance_m, size=n)
    bearing = rng.uniform(0.0, 360.0, size=n)
    noise = rng.normal(0.0, config.sigma_db, size=n) if config.sigma_db > 0 else np.zeros(n)

    lat = np.empty(n)
    lon = np.empty(n)
    for g_idx, gw in enumerate(gws):
        sel = which == g_idx
        lat[sel], lon[sel] = destination_point(gw.pos, bearing[sel], d[sel])

    h_gw = np.array([g.height_m for g in gws])[which]
    truth = path_loss(config.ground_truth, d, h_gw, config.h_sensor, config.freq_mhz, config.city_class, warn=False)
    const = np.array([config.budget.eirp_plus_rx(g) for g in gws])[which]
    measured = truth + noise
    return SynthArrays(which, lat, lon, d, truth, measured, const - measured)


def generate(config: SynthConfig) -> SynthCampaign:
    """Place each sample at a random bearing and distance from a random gateway.

    Measured path loss is the ground-truth median plus N(0, sigma_db); the
    RPP is what the link budget then reports. One packet per sample.
    """
    arr = generate_arrays(config)
    gws = list(config.gateways)
    ids = [g.gateway_id for g in gws]
    samples = [
        Sample(
            packet_id=f"pkt-{i:07d}",
            timestamp=EPOCH + timedelta(seconds=i),
            gateway_id=ids[g],
            pos=GeoPoint(la, lo, config.altitude_m),
            satellites=10,
            rpp=r,
            sf=12,
        )
        for i, (g, la, lo, r) in enumerate(zip(arr.gateway_index.tolist(), arr.lat.tolist(),
                                                 arr.lon.tolist(), arr.rpp_dbm.tolist()))
    ]
    return SynthCampaign(samples, {g.gateway_id: g for g in gws}, arr.distance_m, arr.true_path_loss_db)


def write_campaign(campaign: SynthCampaign, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sp, gp = out / "samples.csv", out / "gateways.csv"
    with open(sp, "w", newline="") as fh:
        write_samples(campaign.samples, fh)
    with open(gp, "w", newline="") as fh:
        write_gateways(campaign.gateways.values(), fh)
    return sp, gp
