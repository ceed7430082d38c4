"""Campaign ingestion, post-processing filters and link-budget conversion."""
from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, TextIO

import numpy as np
import requests

from ._accel import haversine_m
from .errors import ProviderDown, ProviderUnavailable, SchemaError, SnapMiss, UnknownGateway, ValidationError
from .geo import GeoPoint, haversine_distance
from .models import DEFAULT_FREQ_MHZ, fspl_db

log = logging.getLogger(__name__)

SAMPLE_COLUMNS = ("packet_id", "timestamp", "gateway_id", "lat", "lon", "alt_m", "satellites", "rpp_dbm", "sf")
GATEWAY_COLUMNS = ("gateway_id", "lat", "lon", "height_m", "gain_dbi")

LOW_SATELLITES = "LowSatellites"
SNAP_OFFSET = "SnapOffset"
ALTITUDE = "Altitude"
BELOW_FSPL = "BelowFspl"
STAGES = (LOW_SATELLITES, SNAP_OFFSET, ALTITUDE, BELOW_FSPL)


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    packet_id: str
    timestamp: datetime
    gateway_id: str
    pos: GeoPoint
    satellites: int
    rpp: float
    sf: int

    def __post_init__(self):
        if not 7 <= self.sf <= 12:
            raise ValidationError(f"spreading factor must be in [7, 12], got {self.sf}")
        if not math.isfinite(self.rpp):
            raise ValidationError(f"rpp must be finite, got {self.rpp}")
        if self.satellites < 0:
            raise ValidationError(f"satellites must be >= 0, got {self.satellites}")


@dataclass(frozen=True)
class Gateway:
    gateway_id: str
    pos: GeoPoint
    height_m: float
    gain_dbi: float = 3.0

    def __post_init__(self):
        if not self.height_m > 0:
            raise ValidationError(f"gateway {self.gateway_id}: height must be > 0")


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float = 14.0
    tx_gain_dbi: float = 0.0
    rx_gain_dbi: float | None = 3.0
    fixed_losses_db: float = 0.0

    def __post_init__(self):
        for name in ("tx_power_dbm", "tx_gain_dbi", "fixed_losses_db"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.rx_gain_dbi is not None and not math.isfinite(self.rx_gain_dbi):
            raise ValidationError("rx_gain_dbi must be finite")

    def eirp_plus_rx(self, gw: Gateway | None = None) -> float:
        """Everything on the link except the path loss itself.

        A budget without ``rx_gain_dbi`` takes the receive gain from the gateway.
        """
        rx = self.rx_gain_dbi
        if rx is None:
            if gw is None:
                raise ValidationError("budget has no rx gain and no gateway was given")
            rx = gw.gain_dbi
        return self.tx_power_dbm + self.tx_gain_dbi + rx - self.fixed_losses_db


def measured_path_loss(sample: Sample, gw: Gateway | None, budget: LinkBudget = LinkBudget()) -> float:
    return budget.eirp_plus_rx(gw) - sample.rpp


def predicted_rpp(pl, budget: LinkBudget = LinkBudget(), gw: Gateway | None = None):
    return budget.eirp_plus_rx(gw) - pl


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RejectedRow:
    line: int
    reason: str
    raw: dict


@dataclass
class ParseResult:
    samples: list[Sample]
    rejects: list[RejectedRow]


def _parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _resolve_columns(fieldnames, required, mapping: Mapping[str, str] | None) -> dict[str, str]:
    mapping = dict(mapping or {})
    cols = {c: mapping.get(c, c) for c in required}
    missing = [src for src in cols.values() if src not in (fieldnames or ())]
    if missing:
        raise SchemaError(f"missing required columns: {', '.join(missing)}")
    return cols


def _float_or_none(text: str) -> float | None:
    text = text.strip()
    return None if text == "" else float(text)


def parse_samples(stream: TextIO, mapping: Mapping[str, str] | None = None) -> ParseResult:
    """Read samples.csv. Bad rows go to ``rejects`` with their 1-based line number."""
    reader = csv.DictReader(stream)
    cols = _resolve_columns(reader.fieldnames, SAMPLE_COLUMNS, mapping)
    samples: list[Sample] = []
    rejects: list[RejectedRow] = []
    for row in reader:
        line = reader.line_num
        try:
            s = Sample(
                packet_id=row[cols["packet_id"]],
                timestamp=_parse_timestamp(row[cols["timestamp"]]),
                gateway_id=row[cols["gateway_id"]],
                pos=GeoPoint(
                    float(row[cols["lat"]]),
                    float(row[cols["lon"]]),
                    _float_or_none(row[cols["alt_m"]]),
                ),
                satellites=int(row[cols["satellites"]]),
                rpp=float(row[cols["rpp_dbm"]]),
                sf=int(row[cols["sf"]]),
            )
        except (ValueError, TypeError, AttributeError) as exc:
            rejects.append(RejectedRow(line, str(exc), dict(row)))
            continue
        samples.append(s)
    return ParseResult(samples, rejects)


def parse_gateways(stream: TextIO, mapping: Mapping[str, str] | None = None) -> dict[str, Gateway]:
    reader = csv.DictReader(stream)
    cols = _resolve_columns(reader.fieldnames, GATEWAY_COLUMNS, mapping)
    registry: dict[str, Gateway] = {}
    for row in reader:
        try:
            gw = Gateway(
                gateway_id=row[cols["gateway_id"]],
                pos=GeoPoint(float(row[cols["lat"]]), float(row[cols["lon"]])),
                height_m=float(row[cols["height_m"]]),
                gain_dbi=float(row[cols["gain_dbi"]]),
            )
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"gateways.csv line {reader.line_num}: {exc}") from exc
        if gw.gateway_id in registry:
            raise ValidationError(f"duplicate gateway id {gw.gateway_id!r}")
        registry[gw.gateway_id] = gw
    return registry


def read_samples(path, mapping=None) -> ParseResult:
    with open(path, newline="") as fh:
        return parse_samples(fh, mapping)


def read_gateways(path, mapping=None) -> dict[str, Gateway]:
    with open(path, newline="") as fh:
        return parse_gateways(fh, mapping)


def write_samples(samples: Iterable[Sample], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SAMPLE_COLUMNS)
    for s in samples:
        w.writerow([
            s.packet_id,
            format_timestamp(s.timestamp),
            s.gateway_id,
            repr(s.pos.lat),
            repr(s.pos.lon),
            "" if s.pos.alt is None else repr(s.pos.alt),
            s.satellites,
            repr(s.rpp),
            s.sf,
        ])


def write_gateways(gateways: Iterable[Gateway], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(GATEWAY_COLUMNS)
    for g in gateways:
        w.writerow([g.gateway_id, repr(g.pos.lat), repr(g.pos.lon), repr(g.height_m), repr(g.gain_dbi)])


def write_rejects(rejects: Iterable[RejectedRow], stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["line", "reason", "raw"])
    for r in rejects:
        w.writerow([r.line, r.reason, json.dumps(r.raw, sort_keys=True)])


# --------------------------------------------------------------------------
# street snapping
# --------------------------------------------------------------------------

class SnapProvider(Protocol):
    def snap(self, pos: GeoPoint) -> GeoPoint: ...


class IdentitySnap:
    """Offline passthrough for synthetic data."""

    def snap(self, pos: GeoPoint) -> GeoPoint:
        return pos


def fixture_key(lat: float, lon: float, precision: int = 6) -> str:
    return f"{lat:.{precision}f},{lon:.{precision}f}"


class FixtureSnap:
    """Replays recorded snaps from a JSON file.

    File layout: ``{"precision": 6, "points": {"lat,lon": [lat, lon], ...}}``
    with keys rounded to ``precision`` decimals. A bare mapping is also
    accepted and assumed to use 6 decimals.
    """

    def __init__(self, points: Mapping[str, list], precision: int = 6):
        self.points = dict(points)
        self.precision = precision

    @classmethod
    def load(cls, path) -> "FixtureSnap":
        data = json.loads(Path(path).read_text())
        if "points" in data:
            return cls(data["points"], int(data.get("precision", 6)))
        return cls(data)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps({"precision": self.precision, "points": self.points}, sort_keys=True, indent=1))

    def snap(self, pos: GeoPoint) -> GeoPoint:
        hit = self.points.get(fixture_key(pos.lat, pos.lon, self.precision))
        if hit is None:
            raise SnapMiss(f"no recorded snap for ({pos.lat}, {pos.lon})")
        return GeoPoint(float(hit[0]), float(hit[1]), pos.alt)


class OsrmSnap:
    """OSRM-compatible ``/nearest`` client with retries on transient failures.

    After ``max_consecutive_failures`` positions in a row fail at the
    transport level the client raises :class:`ProviderDown` instead of
    letting every remaining sample time out.
    """

    def __init__(self, base_url: str, timeout: float = 5.0, retries: int = 3, backoff: float = 0.2,
                 profile: str = "driving", max_in_flight: int = 4, max_consecutive_failures: int = 20):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.profile = profile
        self.max_in_flight = max_in_flight
        self.max_consecutive_failures = max_consecutive_failures
        self._failures = 0
        self._lock = threading.Lock()

    def url_for(self, pos: GeoPoint) -> str:
        return f"{self.base_url}/nearest/v1/{self.profile}/{pos.lon},{pos.lat}"

    def snap(self, pos: GeoPoint) -> GeoPoint:
        if self._failures >= self.max_consecutive_failures:
            raise ProviderDown(f"{self.base_url}: {self._failures} consecutive failures, giving up")
        url = self.url_for(pos)
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * attempt)
            try:
                resp = requests.get(url, params={"number": 1}, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = ProviderUnavailable(f"HTTP {resp.status_code} from {url}")
                continue
            with self._lock:
                self._failures = 0
            try:
                body = resp.json()
                if body.get("code") != "Ok" or not body.get("waypoints"):
                    raise SnapMiss(f"no street near ({pos.lat}, {pos.lon}): {body.get('code')}")
                lon, lat = body["waypoints"][0]["location"]
            except (ValueError, KeyError, TypeError) as exc:
                raise SnapMiss(f"malformed response from {url}: {exc}") from exc
            return GeoPoint(float(lat), float(lon), pos.alt)
        with self._lock:
            self._failures += 1
            down = self._failures >= self.max_consecutive_failures
        msg = f"{url} failed after {self.retries + 1} attempts: {last}"
        raise ProviderDown(msg) if down else ProviderUnavailable(msg)


def snap_to_street(pos: GeoPoint, provider: SnapProvider) -> tuple[GeoPoint, float]:
    snapped = provider.snap(pos)
    return snapped, haversine_distance(pos, snapped)


def snap_many(positions: list[GeoPoint], provider: SnapProvider, max_in_flight: int | None = None):
    """Snap a list of positions; per-position failures come back as exception instances.

    :class:`ProviderDown` is raised, not returned.
    """
    def one(p):
        try:
            return snap_to_street(p, provider)
        except ProviderDown:
            raise
        except ProviderUnavailable as exc:
            return exc

    workers = max_in_flight or getattr(provider, "max_in_flight", 1)
    if workers <= 1 or len(positions) < 2:
        return [one(p) for p in positions]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, positions))


# --------------------------------------------------------------------------
# filter chain
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterConfig:
    max_altitude_m: float
    min_satellites: int = 5
    max_offset_m: float = 20.0
    freq_mhz: float = DEFAULT_FREQ_MHZ
    budget: LinkBudget = field(default_factory=LinkBudget)

    def __post_init__(self):
        if self.max_altitude_m is None or not math.isfinite(self.max_altitude_m):
            raise ValidationError("max_altitude_m must be configured")
        if self.min_satellites < 0 or not self.max_offset_m > 0:
            raise ValidationError("filter thresholds must be positive")


@dataclass
class FilterReport:
    input_count: int = 0
    output_count: int = 0
    rejected: dict[str, int] = field(default_factory=lambda: {k: 0 for k in STAGES})
    quarantined: int = 0
    stage_input: dict[str, int] = field(default_factory=lambda: {k: 0 for k in STAGES})

    def reconciles(self) -> bool:
        return self.input_count == self.output_count + sum(self.rejected.values()) + self.quarantined

    def shares_of_input(self) -> dict[str, float]:
        n = self.input_count or 1
        return {k: v / n for k, v in self.rejected.items()}

    def shares_of_stage_input(self) -> dict[str, float]:
        return {k: (v / self.stage_input[k] if self.stage_input[k] else 0.0) for k, v in self.rejected.items()}

    def merge(self, other: "FilterReport") -> "FilterReport":
        return FilterReport(
            self.input_count + other.input_count,
            self.output_count + other.output_count,
            {k: self.rejected[k] + other.rejected[k] for k in STAGES},
            self.quarantined + other.quarantined,
            {k: self.stage_input[k] + other.stage_input[k] for k in STAGES},
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["share_of_input"] = self.shares_of_input()
        d["share_of_stage_input"] = self.shares_of_stage_input()
        return d


@dataclass
class FilterOutcome:
    clean: list[Sample]
    report: FilterReport
    rejected: list[tuple[Sample, str]]
    quarantined: list[tuple[Sample, str]]

    def __iter__(self):
        yield self.clean
        yield self.report


def apply_filters(samples: list[Sample], gateways: Mapping[str, Gateway], config: FilterConfig,
                  provider: SnapProvider | None = None,
                  on_progress: Callable[[str, int], None] | None = None) -> FilterOutcome:
    """Four-stage post-processing; each sample is charged to the first stage it fails.

    Surviving samples carry their snapped position. Samples whose snap fails
    are quarantined rather than rejected.
    """
    provider = provider or IdentitySnap()
    for s in samples:
        if s.gateway_id not in gateways:
            raise UnknownGateway(s.gateway_id)

    report = FilterReport(input_count=len(samples))
    rejected: list[tuple[Sample, str]] = []
    quarantined: list[tuple[Sample, str]] = []

    def stage(name, pool, keep):
        report.stage_input[name] = len(pool)
        out = []
        for s, ok in zip(pool, keep):
            if ok:
                out.append(s)
            else:
                report.rejected[name] += 1
                rejected.append((s, name))
        if on_progress:
            on_progress(name, len(out))
        return out

    pool = stage(LOW_SATELLITES, samples, [s.satellites >= config.min_satellites for s in samples])

    # packets heard by several gateways share one position; snap each position once
    unique = list(dict.fromkeys((s.pos.lat, s.pos.lon) for s in pool))
    snapped = snap_many([GeoPoint(lat, lon) for lat, lon in unique], provider)
    by_pos = dict(zip(unique, snapped))
    report.stage_input[SNAP_OFFSET] = len(pool)
    nxt = []
    for s in pool:
        res = by_pos[(s.pos.lat, s.pos.lon)]
        if isinstance(res, Exception):
            report.quarantined += 1
            quarantined.append((s, str(res)))
            continue
        point, offset = res
        if offset > config.max_offset_m:
            report.rejected[SNAP_OFFSET] += 1
            rejected.append((s, SNAP_OFFSET))
            continue
        nxt.append(replace(s, pos=GeoPoint(point.lat, point.lon, s.pos.alt)))
    pool = nxt

    pool = stage(ALTITUDE, pool, [s.pos.alt is None or s.pos.alt <= config.max_altitude_m for s in pool])

    if pool:
        gws = [gateways[s.gateway_id] for s in pool]
        d = haversine_m(
            np.array([s.pos.lat for s in pool]), np.array([s.pos.lon for s in pool]),
            np.array([g.pos.lat for g in gws]), np.array([g.pos.lon for g in gws]),
        )
        pl = np.array([measured_path_loss(s, g, config.budget) for s, g in zip(pool, gws)])
        with np.errstate(divide="ignore"):
            floor = np.where(d > 0, fspl_db(np.where(d > 0, d, 1.0), config.freq_mhz), np.inf)
        keep = pl >= floor
    else:
        keep = []
    pool = stage(BELOW_FSPL, pool, list(keep))

    report.output_count = len(pool)
    return FilterOutcome(pool, report, rejected, quarantined)


# --------------------------------------------------------------------------
# array view used by fitting and analysis
# --------------------------------------------------------------------------

@dataclass
class LinkTable:
    """Per-sample link arrays: distance, gateway height, measured path loss."""

    distance_m: np.ndarray
    h_gw: np.ndarray
    path_loss_db: np.ndarray
    rpp_dbm: np.ndarray
    link_const_db: np.ndarray

    def __len__(self):
        return len(self.distance_m)

    def subset(self, idx) -> "LinkTable":
        return LinkTable(*(a[idx] for a in (self.distance_m, self.h_gw, self.path_loss_db, self.rpp_dbm, self.link_const_db)))


def link_table(samples: list[Sample], gateways: Mapping[str, Gateway], budget: LinkBudget = LinkBudget()) -> LinkTable:
    try:
        gws = [gateways[s.gateway_id] for s in samples]
    except KeyError as exc:
        raise UnknownGateway(exc.args[0]) from None
    d = haversine_m(
        np.array([s.pos.lat for s in samples], dtype=float), np.array([s.pos.lon for s in samples], dtype=float),
        np.array([g.pos.lat for g in gws], dtype=float), np.array([g.pos.lon for g in gws], dtype=float),
    )
    const = np.array([budget.eirp_plus_rx(g) for g in gws], dtype=float)
    rpp = np.array([s.rpp for s in samples], dtype=float)
    return LinkTable(d, np.array([g.height_m for g in gws], dtype=float), const - rpp, rpp, const)
