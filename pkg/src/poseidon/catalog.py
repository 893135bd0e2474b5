"""Earthquake catalog parsing, validation and per-event energy features.

Catalogs are comma-separated text with a header row. The default column
mapping matches the public global-catalog layout (id, time, latitude,
longitude, depth, mag, magType, tsunami, type, quality fields, network
metadata); precomputed temporal / grid / energy columns in such files are
ignored on input and always recomputed here so that magnitude remains the
single source of truth.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import InvalidInputError, SchemaError

ENERGY_SLOPE = 1.5
ENERGY_INTERCEPT = 4.8

MAX_DEPTH_KM = 800.0
MAX_MAGNITUDE = 9.1

#: input column -> Event field for the default file layout
DEFAULT_MAPPING = {
    "id": "id",
    "time": "time",
    "latitude": "latitude",
    "longitude": "longitude",
    "depth": "depth",
    "mag": "magnitude",
    "magType": "magnitude_type",
    "tsunami": "tsunami",
    "type": "event_type",
    "nst": "n_stations",
    "dmin": "min_station_dist",
    "rms": "rms_residual",
    "gap": "azimuthal_gap",
    "horizontalError": "err_horizontal",
    "depthError": "err_depth",
    "magError": "err_magnitude",
}

MANDATORY = ("time", "latitude", "longitude", "depth", "magnitude")

QUALITY_FIELDS = (
    "n_stations",
    "min_station_dist",
    "rms_residual",
    "azimuthal_gap",
    "err_horizontal",
    "err_depth",
    "err_magnitude",
)

OUTPUT_COLUMNS = (
    "id", "time", "latitude", "longitude", "depth", "mag", "magType",
    "tsunami", "type", "nst", "dmin", "rms", "gap",
    "horizontalError", "depthError", "magError",
)


def compute_energy(magnitude: float) -> tuple[float, float]:
    """Energy in Joules and its log10 for a magnitude value.

    log10(E) = 1.5 * M + 4.8, so a magnitude 5.0 event releases about
    10**12.3 J and the strongest recorded events approach 10**18 J.
    """
    if not math.isfinite(magnitude):
        raise InvalidInputError(f"magnitude must be finite, got {magnitude}")
    log10_energy = ENERGY_SLOPE * magnitude + ENERGY_INTERCEPT
    return 10.0 ** log10_energy, log10_energy


@dataclass(frozen=True)
class Quality:
    n_stations: float | None = None
    min_station_dist: float | None = None
    rms_residual: float | None = None
    azimuthal_gap: float | None = None
    err_horizontal: float | None = None
    err_depth: float | None = None
    err_magnitude: float | None = None


@dataclass(frozen=True)
class Event:
    id: str
    time: float  # seconds since the Unix epoch, UTC
    latitude: float
    longitude: float
    depth: float  # km
    magnitude: float
    magnitude_type: str = ""
    tsunami: bool = False
    event_type: str = "earthquake"
    quality: Quality | None = None
    energy: float = field(default=0.0, compare=False)
    log10_energy: float = field(default=0.0, compare=False)

    def __post_init__(self):
        e, log_e = compute_energy(self.magnitude)
        object.__setattr__(self, "energy", e)
        object.__setattr__(self, "log10_energy", log_e)


def validate_event(ev: Event) -> str | None:
    """Return a reason string if the event violates bounds, else None."""
    if not (-90.0 <= ev.latitude <= 90.0):
        return f"latitude {ev.latitude} out of [-90, 90]"
    if not (-180.0 <= ev.longitude <= 180.0):
        return f"longitude {ev.longitude} out of [-180, 180]"
    if not (0.0 <= ev.depth <= MAX_DEPTH_KM):
        return f"depth {ev.depth} out of [0, {MAX_DEPTH_KM}]"
    if not (0.0 <= ev.magnitude <= MAX_MAGNITUDE):
        return f"magnitude {ev.magnitude} out of [0, {MAX_MAGNITUDE}]"
    if not math.isfinite(ev.time):
        return f"non-finite time {ev.time}"
    return None


class Catalog:
    """Immutable, time-sorted event collection with cached column arrays."""

    __slots__ = ("events", "magnitude_completeness", "times", "lats", "lons",
                 "depths", "mags", "energies", "tsunami")

    def __init__(self, events, magnitude_completeness: float = 0.0):
        events = sorted(events, key=lambda e: e.time)
        self.events: tuple[Event, ...] = tuple(events)
        self.magnitude_completeness = float(magnitude_completeness)
        self.times = np.array([e.time for e in events], dtype=np.float64)
        self.lats = np.array([e.latitude for e in events], dtype=np.float64)
        self.lons = np.array([e.longitude for e in events], dtype=np.float64)
        self.depths = np.array([e.depth for e in events], dtype=np.float64)
        self.mags = np.array([e.magnitude for e in events], dtype=np.float64)
        self.energies = np.array([e.energy for e in events], dtype=np.float64)
        self.tsunami = np.array([e.tsunami for e in events], dtype=bool)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def time_span(self) -> tuple[float, float]:
        if not self.events:
            return (0.0, 0.0)
        return (float(self.times[0]), float(self.times[-1]))

    def subset(self, mask) -> "Catalog":
        keep = [e for e, m in zip(self.events, mask) if m]
        return Catalog(keep, self.magnitude_completeness)


@dataclass
class ParseStats:
    rows: int = 0
    kept: int = 0
    dropped: int = 0
    reasons: dict = field(default_factory=dict)

    def drop(self, reason: str):
        self.dropped += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


def parse_time(value: str) -> float:
    """Accept epoch seconds or ISO 8601; naive timestamps are taken as UTC."""
    text = value.strip()
    try:
        return float(text)
    except ValueError:
        pass
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_time(t: float) -> str:
    dt = datetime.fromtimestamp(t, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"


def _parse_bool(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "1.0")


def parse_catalog(path, mapping: dict | None = None,
                  magnitude_completeness: float = 0.0) -> tuple[Catalog, ParseStats]:
    """Read a catalog file, dropping and counting invalid rows.

    Rows whose mandatory fields (time, latitude, longitude, depth,
    magnitude) are missing, unparseable or out of bounds are dropped;
    everything else is kept. Energy columns in the file are ignored and
    recomputed from magnitude. Returns the time-sorted catalog and the
    per-reason drop statistics.
    """
    mapping = dict(mapping or DEFAULT_MAPPING)
    try:
        handle = open(path, "r", newline="")
    except OSError as exc:
        raise IOError(f"cannot read catalog file {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        present = {col: fld for col, fld in mapping.items() if col in header}
        fields_present = set(present.values())
        for needed in MANDATORY:
            if needed not in fields_present:
                missing = [c for c, f in mapping.items() if f == needed]
                raise SchemaError(f"mandatory column missing: {missing[0] if missing else needed}")
        stats = ParseStats()
        events = []
        seen_ids = set()
        dup_warned = False
        for i, row in enumerate(reader):
            stats.rows += 1
            ev = _row_to_event(row, present, i, stats)
            if ev is None:
                continue
            if ev.id in seen_ids and not dup_warned:
                warnings.warn(f"duplicate event id {ev.id!r}; duplicates are kept")
                dup_warned = True
            seen_ids.add(ev.id)
            events.append(ev)
        stats.kept = len(events)
    return Catalog(events, magnitude_completeness), stats


def _row_to_event(row: dict, present: dict, index: int, stats: ParseStats) -> Event | None:
    values = {}
    for col, fld in present.items():
        values[fld] = (row.get(col) or "").strip()
    try:
        t = parse_time(values["time"])
        lat = float(values["latitude"])
        lon = float(values["longitude"])
        depth = float(values["depth"])
        mag = float(values["magnitude"])
    except (ValueError, KeyError) as exc:
        stats.drop(f"unparseable mandatory field ({exc.__class__.__name__})")
        return None

    quality_vals = {}
    for fld in QUALITY_FIELDS:
        raw = values.get(fld, "")
        if raw != "":
            try:
                quality_vals[fld] = float(raw)
            except ValueError:
                pass
    quality = Quality(**quality_vals) if quality_vals else None

    ev = Event(
        id=values.get("id", "") or f"row{index}",
        time=t,
        latitude=lat,
        longitude=lon,
        depth=depth,
        magnitude=mag,
        magnitude_type=values.get("magnitude_type", ""),
        tsunami=_parse_bool(values.get("tsunami", "")),
        event_type=values.get("event_type", "") or "earthquake",
        quality=quality,
    )
    reason = validate_event(ev)
    if reason is not None:
        stats.drop(reason.split(" ", 1)[0])
        return None
    return ev


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    return "%.6g" % x


def write_catalog(catalog: Catalog, path) -> None:
    """Serialize deterministically: fixed column order, 6 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(OUTPUT_COLUMNS)
    for ev in catalog:
        q = ev.quality or Quality()
        writer.writerow([
            ev.id,
            format_time(ev.time),
            _fmt(ev.latitude),
            _fmt(ev.longitude),
            _fmt(ev.depth),
            _fmt(ev.magnitude),
            ev.magnitude_type,
            "1" if ev.tsunami else "0",
            ev.event_type,
            _fmt(q.n_stations),
            _fmt(q.min_station_dist),
            _fmt(q.rms_residual),
            _fmt(q.azimuthal_gap),
            _fmt(q.err_horizontal),
            _fmt(q.err_depth),
            _fmt(q.err_magnitude),
        ])
    with open(path, "w", newline="") as handle:
        handle.write(buf.getvalue())


def grid_index(latitude: float, longitude: float, cell_size: float) -> tuple[int, int]:
    """Dataset-convention spatial bin of a coordinate pair.

    row = floor((lat + 90) / cell), col = floor((lon + 180) / cell), with
    the north pole and the antimeridian clamped into the last valid bin.
    """
    if cell_size not in (1.0, 2.0, 4.0):
        raise InvalidInputError(f"cell_size must be one of 1.0, 2.0, 4.0; got {cell_size}")
    if not (-90.0 <= latitude <= 90.0) or not (-180.0 <= longitude <= 180.0):
        raise InvalidInputError(f"coordinates out of bounds: ({latitude}, {longitude})")
    rows = int(round(180.0 / cell_size))
    cols = int(round(360.0 / cell_size))
    row = min(int(math.floor((latitude + 90.0) / cell_size)), rows - 1)
    col = min(int(math.floor((longitude + 180.0) / cell_size)), cols - 1)
    return row, col


@dataclass(frozen=True)
class QualityCriteria:
    """Upper bounds on quality metrics; None means "do not filter"."""

    max_azimuthal_gap: float | None = None
    max_rms_residual: float | None = None
    max_err_horizontal: float | None = None
    max_err_depth: float | None = None
    max_err_magnitude: float | None = None
    min_stations: float | None = None

    def is_empty(self) -> bool:
        return all(v is None for v in self.__dict__.values())


@dataclass
class FilterReport:
    passed: int = 0
    failed: int = 0
    missing_quality: int = 0


def filter_quality(catalog: Catalog, criteria: QualityCriteria) -> tuple[Catalog, FilterReport]:
    """Keep events meeting the thresholds; events without a quality group pass.

    Review practice differs across contributing networks, so absence of
    quality metrics is not treated as failure.
    """
    report = FilterReport()
    if criteria.is_empty():
        report.passed = len(catalog)
        return catalog, report

    keep = []
    for ev in catalog:
        q = ev.quality
        if q is None:
            report.missing_quality += 1
            report.passed += 1
            keep.append(True)
            continue
        ok = _passes(q, criteria)
        keep.append(ok)
        if ok:
            report.passed += 1
        else:
            report.failed += 1
    if report.missing_quality and report.missing_quality == len(catalog):
        warnings.warn("quality criteria set but no event carries quality metrics; all retained")
    return catalog.subset(keep), report


def _passes(q: Quality, c: QualityCriteria) -> bool:
    checks = (
        (c.max_azimuthal_gap, q.azimuthal_gap, False),
        (c.max_rms_residual, q.rms_residual, False),
        (c.max_err_horizontal, q.err_horizontal, False),
        (c.max_err_depth, q.err_depth, False),
        (c.max_err_magnitude, q.err_magnitude, False),
        (c.min_stations, q.n_stations, True),
    )
    for bound, value, is_min in checks:
        if bound is None or value is None:
            continue
        if is_min and value < bound:
            return False
        if not is_min and value > bound:
            return False
    return True
