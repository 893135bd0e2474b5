"""Trigger selection and per-trigger task labels.

Triggers are the M5.0+ events a model is asked about. Each trigger gets
three binary labels derived from the catalog content alone:

  * aftershock: at least ``aftershock_min_count`` events of magnitude
    >= ``aftershock_min_magnitude`` occur within ``aftershock_radius`` km
    and (0, window] days after the trigger;
  * foreshock: some strictly larger event occurs within
    ``foreshock_radius`` km and (0, window] days after the trigger
    (equal magnitude is a doublet, not a mainshock);
  * tsunami: the trigger's own catalog flag.

Sampling weight is 1 + 10 * [tsunami] + 3 * [foreshock], so the rare
classes are revisited more often by the weighted sampler.

The labeler also collects, per trigger, the delays and the largest
magnitude inside the aftershock window; training batches aggregate these
into the decay-law and magnitude-gap objectives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, Event
from .errors import InvalidInputError

EARTH_RADIUS_KM = 6371.0
DAY = 86400.0


def great_circle_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in km between (lat, lon) pairs, sphere radius 6371."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    s = (math.sin((lat2 - lat1) / 2.0) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(s)))


def _haversine_arrays(lat0: float, lon0: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    la0, lo0 = math.radians(lat0), math.radians(lon0)
    la = np.radians(lats)
    lo = np.radians(lons)
    s = (np.sin((la - la0) / 2.0) ** 2
         + math.cos(la0) * np.cos(la) * np.sin((lo - lo0) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(s)))


@dataclass(frozen=True)
class LabelConfig:
    min_trigger_magnitude: float = 5.0
    aftershock_window: float = 30.0  # days
    aftershock_radius: float = 100.0  # km
    aftershock_min_count: int = 5
    aftershock_min_magnitude: float = 3.0
    foreshock_window: float = 30.0  # days
    foreshock_radius: float = 100.0  # km

    def validate(self) -> None:
        for name in ("aftershock_window", "aftershock_radius", "foreshock_window", "foreshock_radius"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.aftershock_min_count < 1:
            raise InvalidInputError("aftershock_min_count must be at least 1")


@dataclass(frozen=True)
class Sample:
    trigger: Event
    label_aftershock: bool
    label_tsunami: bool
    label_foreshock: bool
    sample_weight: float
    # batch-level physics aggregates collected on the way
    aftershock_delays: np.ndarray  # days, events in the aftershock window
    max_aftershock_magnitude: float  # nan when the window is empty


def sample_weight(tsunami: bool, foreshock: bool) -> float:
    return 1.0 + 10.0 * bool(tsunami) + 3.0 * bool(foreshock)


def select_triggers(catalog: Catalog, min_magnitude: float) -> list[Event]:
    """Time-ordered events at or above the trigger threshold."""
    return [e for e in catalog if e.magnitude >= min_magnitude]


def _window_indices(catalog: Catalog, t: float, window_days: float) -> slice:
    lo = int(np.searchsorted(catalog.times, t, side="right"))
    hi = int(np.searchsorted(catalog.times, t + window_days * DAY, side="right"))
    return slice(lo, hi)


def label_sample(catalog: Catalog, trigger: Event, cfg: LabelConfig | None = None) -> Sample:
    """Labels for one trigger; the trigger must belong to the catalog."""
    cfg = cfg or LabelConfig()
    cfg.validate()
    pos = int(np.searchsorted(catalog.times, trigger.time, side="left"))
    found = False
    while pos < len(catalog) and catalog.times[pos] == trigger.time:
        if catalog.events[pos].id == trigger.id:
            found = True
            break
        pos += 1
    if not found:
        raise InvalidInputError(f"trigger {trigger.id!r} is not in the catalog")

    # aftershock window
    sl = _window_indices(catalog, trigger.time, cfg.aftershock_window)
    dists = _haversine_arrays(trigger.latitude, trigger.longitude,
                              catalog.lats[sl], catalog.lons[sl])
    near = dists <= cfg.aftershock_radius
    strong = catalog.mags[sl] >= cfg.aftershock_min_magnitude
    in_window = near & strong
    delays = (catalog.times[sl][in_window] - trigger.time) / DAY
    mags_in = catalog.mags[sl][in_window]
    label_aftershock = int(in_window.sum()) >= cfg.aftershock_min_count
    max_after = float(mags_in.max()) if mags_in.size else float("nan")

    # foreshock window
    if (cfg.foreshock_window, cfg.foreshock_radius) == (cfg.aftershock_window, cfg.aftershock_radius):
        larger = near & (catalog.mags[sl] > trigger.magnitude)
    else:
        sl2 = _window_indices(catalog, trigger.time, cfg.foreshock_window)
        d2 = _haversine_arrays(trigger.latitude, trigger.longitude,
                               catalog.lats[sl2], catalog.lons[sl2])
        larger = (d2 <= cfg.foreshock_radius) & (catalog.mags[sl2] > trigger.magnitude)
    label_foreshock = bool(larger.any())

    return Sample(
        trigger=trigger,
        label_aftershock=bool(label_aftershock),
        label_tsunami=bool(trigger.tsunami),
        label_foreshock=label_foreshock,
        sample_weight=sample_weight(trigger.tsunami, label_foreshock),
        aftershock_delays=np.asarray(delays, dtype=np.float64),
        max_aftershock_magnitude=max_after,
    )


def build_samples(catalog: Catalog, cfg: LabelConfig | None = None,
                  drop_no_lookback: bool = True, lookback_days: float = 90.0) -> list[Sample]:
    """Label every trigger in the catalog.

    With ``drop_no_lookback`` the triggers whose context window would
    extend before the catalog start are skipped: they have no history to
    build inputs from, which is also the natural reason a labeled sample
    table ends up smaller than the raw trigger count.
    """
    cfg = cfg or LabelConfig()
    t0 = catalog.time_span[0]
    samples = []
    for trigger in select_triggers(catalog, cfg.min_trigger_magnitude):
        if drop_no_lookback and trigger.time - lookback_days * DAY < t0:
            continue
        samples.append(label_sample(catalog, trigger, cfg))
    return samples


def write_samples(samples, path) -> None:
    """One row per trigger: id, three labels, weight."""
    with open(path, "w") as handle:
        handle.write("id,label_aftershock,label_tsunami,label_foreshock,weight\n")
        for s in samples:
            handle.write("%s,%d,%d,%d,%g\n" % (
                s.trigger.id, s.label_aftershock, s.label_tsunami,
                s.label_foreshock, s.sample_weight))


def prevalences(samples) -> tuple[float, float, float]:
    """Fractions of aftershock / foreshock / tsunami positives."""
    n = max(len(samples), 1)
    a = sum(s.label_aftershock for s in samples) / n
    f = sum(s.label_foreshock for s in samples) / n
    t = sum(s.label_tsunami for s in samples) / n
    return a, f, t
