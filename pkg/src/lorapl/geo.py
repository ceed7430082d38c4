"""Great-circle geometry between sensor observations and gateways."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ._accel import EARTH_RADIUS_M, haversine_m
from .errors import ValidationError, ZeroDistance

if TYPE_CHECKING:
    from .pipeline import Gateway

__all__ = [
    "EARTH_RADIUS_M",
    "GeoPoint",
    "LinkGeometry",
    "haversine_distance",
    "haversine_m",
    "destination_point",
    "link_geometry",
]


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    alt: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise ValidationError(f"latitude out of range: {self.lat}")
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise ValidationError(f"longitude out of range: {self.lon}")
        if self.alt is not None and not math.isfinite(self.alt):
            raise ValidationError(f"altitude not finite: {self.alt}")


@dataclass(frozen=True)
class LinkGeometry:
    """Ground distance and antenna heights for one sensor-gateway link."""

    distance: float
    h_gw: float
    h_sensor: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValidationError(f"link distance must be > 0, got {self.distance}")
        if not self.h_gw > 0 or not self.h_sensor > 0:
            raise ValidationError("antenna heights must be > 0")


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371 km."""
    return float(haversine_m(a.lat, a.lon, b.lat, b.lon))


def destination_point(origin: GeoPoint, bearing_deg, distance_m):
    """Inverse haversine: (lat, lon) reached from ``origin`` along a bearing.

    Accepts scalars or arrays for bearing and distance and returns arrays.
    """
    phi1 = math.radians(origin.lat)
    lmb1 = math.radians(origin.lon)
    theta = np.radians(bearing_deg)
    delta = np.asarray(distance_m, dtype=np.float64) / EARTH_RADIUS_M
    sin_phi2 = np.sin(phi1) * np.cos(delta) + np.cos(phi1) * np.sin(delta) * np.cos(theta)
    phi2 = np.arcsin(np.clip(sin_phi2, -1.0, 1.0))
    lmb2 = lmb1 + np.arctan2(
        np.sin(theta) * np.sin(delta) * np.cos(phi1),
        np.cos(delta) - np.sin(phi1) * sin_phi2,
    )
    lon = (np.degrees(lmb2) + 540.0) % 360.0 - 180.0
    return np.degrees(phi2), lon


def link_geometry(sample_pos: GeoPoint, gw: Gateway, h_sensor: float = 2.0) -> LinkGeometry:
    d = haversine_distance(sample_pos, gw.pos)
    if d <= 0.0:
        raise ZeroDistance(
            f"sensor at ({sample_pos.lat}, {sample_pos.lon}) coincides with gateway {gw.gateway_id}"
        )
    return LinkGeometry(distance=d, h_gw=gw.height_m, h_sensor=h_sensor)
