"""16-dimensional per-event feature vectors from local seismicity context.

Layout (all components finite, inside [-1, 1]):

    0  magnitude / 10
    1  (latitude + 90) / 180
    2  (longitude + 180) / 360
    3  depth / 700
    4  sin(omega),  omega = 2 pi dayofyear / 365 (day 0 = Jan 1)
    5  cos(omega)
    6-8  depth category one-hot: shallow < 70 km, intermediate 70-300, deep > 300
    9  log10(1 + neighborhood count) / 4, clamped to 1
    10 largest neighborhood magnitude / 10
    11 log10(1 + cumulative neighborhood energy) / 20, clamped to 1
    12 magnitude deficit: clamp((local max magnitude - M) / 10, -1, 1);
       positive means larger events have already occurred here
    13 trend ratio count(7 d) / max(count(30 d), 1)
    14 trend ratio count(30 d) / max(count(90 d), 1)
    15 always 0; the named components fill 15 slots, the vector width
       stays fixed at 16

The neighborhood is a latitude band +- dphi degrees and a longitude band
+- dlam / max(cos(lat), 0.1) degrees (wider near the poles, clamped), with
longitude differences wrapped across the antimeridian. Only events
strictly before the reference time enter any statistic.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, Event
from .errors import InvalidInputError

DAY = 86400.0
FEATURE_DIM = 16


@dataclass(frozen=True)
class FeatureConfig:
    dphi: float = 2.0   # latitude half-width, degrees
    dlam: float = 2.0   # longitude half-width at the equator, degrees
    window_days: float = 90.0

    def validate(self):
        if self.dphi <= 0 or self.dlam <= 0 or self.window_days <= 0:
            raise InvalidInputError("neighborhood extents and window must be positive")


def day_of_year(t: float) -> int:
    """0-based day of year in UTC (Jan 1 -> 0)."""
    return _time.gmtime(t).tm_yday - 1


def local_neighborhood(catalog: Catalog, event: Event, dphi: float, dlam: float,
                       window: float) -> np.ndarray:
    """Indices of catalog events inside the space-time neighborhood.

    Time window is [t - window days, t); latitude band is |dlat| <= dphi;
    longitude band is |dlon| <= dlam / max(cos(lat), 0.1) with dlon
    wrapped to [-180, 180].
    """
    if dphi <= 0 or dlam <= 0 or window <= 0:
        raise InvalidInputError("dphi, dlam and window must be positive")
    t = event.time
    lo = int(np.searchsorted(catalog.times, t - window * DAY, side="left"))
    hi = int(np.searchsorted(catalog.times, t, side="left"))
    if hi <= lo:
        return np.empty(0, dtype=np.int64)
    idx = np.arange(lo, hi)
    dlat = np.abs(catalog.lats[idx] - event.latitude)
    dlon = np.abs((catalog.lons[idx] - event.longitude + 180.0) % 360.0 - 180.0)
    half_width = dlam / max(math.cos(math.radians(event.latitude)), 0.1)
    keep = (dlat <= dphi) & (dlon <= half_width)
    return idx[keep]


def event_features(catalog: Catalog, event: Event, cfg: FeatureConfig | None = None) -> np.ndarray:
    """The 16-component feature vector for one event."""
    cfg = cfg or FeatureConfig()
    cfg.validate()

    x = np.zeros(FEATURE_DIM)
    x[0] = min(event.magnitude / 10.0, 1.0)
    x[1] = (event.latitude + 90.0) / 180.0
    x[2] = (event.longitude + 180.0) / 360.0
    x[3] = min(event.depth / 700.0, 1.0)  # catalog depths may reach 800 km
    omega = 2.0 * math.pi * day_of_year(event.time) / 365.0
    x[4] = math.sin(omega)
    x[5] = math.cos(omega)
    if event.depth < 70.0:
        x[6] = 1.0
    elif event.depth <= 300.0:
        x[7] = 1.0
    else:
        x[8] = 1.0

    idx = local_neighborhood(catalog, event, cfg.dphi, cfg.dlam, cfg.window_days)
    count90 = idx.size
    if count90:
        mags = catalog.mags[idx]
        local_max = float(mags.max())
        energy = float(catalog.energies[idx].sum())
        times = catalog.times[idx]
        count7 = int((times >= event.time - 7.0 * DAY).sum())
        count30 = int((times >= event.time - 30.0 * DAY).sum())
    else:
        local_max, energy, count7, count30 = 0.0, 0.0, 0, 0

    x[9] = min(math.log10(1.0 + count90) / 4.0, 1.0)
    x[10] = local_max / 10.0
    x[11] = min(math.log10(1.0 + energy) / 20.0, 1.0)
    x[12] = max(-1.0, min(1.0, (local_max - event.magnitude) / 10.0))
    x[13] = count7 / max(count30, 1)
    x[14] = count30 / max(count90, 1)
    # x[15] stays 0: padding slot keeping the vector at its fixed width
    return x
