"""Synthetic earthquake catalogs with known statistical-law parameters.

A single-generation clustering model: mainshocks are placed uniformly in
a space-time box with magnitude-frequency distributed magnitudes (slope
b_true, restricted to M >= 5), and each spawns a Poisson number of
aftershocks whose delays follow the power-law decay (p_true, c_true,
truncated to the horizon) and whose magnitudes follow the same
magnitude-frequency law capped below the mainshock. The largest
aftershock of every sequence is forced to exactly

    M_main - bath_dm        (clamped to m_min)

so the mainshock / largest-aftershock magnitude gap is noise-free and the
corresponding learnable offset can be tested against an exact target.

All randomness comes from a counter-based Philox generator seeded from
``cfg.seed``; magnitude and delay draws go through explicit inverse-CDF
transforms of uniform variates so the distributions (not the streams) are
reproducible from the formulas alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog, Event
from .errors import InvalidInputError

EPOCH_2020 = 1577836800.0  # 2020-01-01T00:00:00Z
DAY = 86400.0
AFTERSHOCK_SCATTER_DEG = 0.5


@dataclass(frozen=True)
class TsunamiRule:
    """Flag events with magnitude >= min_magnitude and depth <= max_depth_km
    with the given acceptance probability."""

    min_magnitude: float = 7.0
    max_depth_km: float = 70.0
    probability: float = 0.6


@dataclass(frozen=True)
class SynthConfig:
    b_true: float = 1.0
    p_true: float = 1.1
    c_true: float = 0.1  # days
    bath_dm: float = 1.2
    m_min: float = 3.0
    m_max: float = 9.0
    n_mainshocks: int = 3500
    aftershock_productivity: float = 4.0   # expected aftershocks at the reference magnitude
    productivity_exponent: float = 0.8     # log10 productivity gain per magnitude unit; 0 = flat
    productivity_ref_mag: float = 5.0
    max_aftershocks: int = 500
    horizon: float = 365.0  # days
    spatial_extent: float = 12.0  # full width of the lat/lon box, degrees
    center_lat: float = 0.0
    center_lon: float = 0.0
    tsunami_rule: TsunamiRule = field(default_factory=TsunamiRule)
    seed: int = 0

    def validate(self) -> None:
        if not (0.5 <= self.b_true <= 1.5):
            raise InvalidInputError(f"b_true {self.b_true} outside [0.5, 1.5]")
        if not (0.7 <= self.p_true <= 1.5):
            raise InvalidInputError(f"p_true {self.p_true} outside [0.7, 1.5]")
        if self.c_true <= 0 or self.horizon <= 0 or self.n_mainshocks <= 0:
            raise InvalidInputError("rates, horizon and counts must be positive")
        if self.m_min >= self.m_max:
            raise InvalidInputError(f"m_min {self.m_min} must be below m_max {self.m_max}")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator; child streams come from spawn keys."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))


def sample_gr_magnitudes(b: float, m_min: float, m_max: float, n: int, rng) -> np.ndarray:
    """Inverse-CDF draws from the truncated magnitude-frequency density.

    Density is proportional to 10**(-b M) on [m_min, m_max]:
        M = m_min - log10(1 - u (1 - 10**(-b (m_max - m_min)))) / b
    """
    if n <= 0:
        raise InvalidInputError(f"n must be positive, got {n}")
    if m_min >= m_max:
        raise InvalidInputError(f"degenerate magnitude bounds [{m_min}, {m_max}]")
    if b <= 0:
        raise InvalidInputError(f"b must be positive, got {b}")
    u = rng.random(n)
    span = 1.0 - 10.0 ** (-b * (m_max - m_min))
    return m_min - np.log10(1.0 - u * span) / b


def sample_omori_times(p: float, c: float, n: int, horizon: float, rng) -> np.ndarray:
    """Inverse-CDF draws from density ~ (dt + c)**(-p) truncated to (0, horizon].

    The p = 1 case uses the logarithmic antiderivative; every other p the
    general power-law branch.
    """
    if horizon <= 0:
        raise InvalidInputError(f"horizon must be positive, got {horizon}")
    if n <= 0:
        raise InvalidInputError(f"n must be positive, got {n}")
    if c <= 0:
        raise InvalidInputError(f"c must be positive, got {c}")
    u = rng.random(n)
    if p == 1.0:
        return c * np.expm1(u * np.log((horizon + c) / c))
    e = 1.0 - p
    lo, hi = c ** e, (horizon + c) ** e
    return (lo + u * (hi - lo)) ** (1.0 / e) - c


@dataclass
class GenerationLog:
    """True parentage of every generated aftershock."""

    mainshock_ids: list = field(default_factory=list)
    mainshock_mags: list = field(default_factory=list)
    largest_aftershock_mags: list = field(default_factory=list)  # nan if childless
    child_ids: list = field(default_factory=list)
    parent_ids: list = field(default_factory=list)
    delays_days: list = field(default_factory=list)

    def bath_pairs(self) -> np.ndarray:
        """(n, 2) array of (mainshock magnitude, largest aftershock magnitude)
        over mainshocks that produced at least one aftershock."""
        mm = np.asarray(self.mainshock_mags, dtype=np.float64)
        la = np.asarray(self.largest_aftershock_mags, dtype=np.float64)
        keep = ~np.isnan(la)
        return np.column_stack([mm[keep], la[keep]])

    def write(self, path) -> None:
        with open(path, "w") as handle:
            handle.write("child_id,parent_id,delay_days\n")
            for cid, pid, d in zip(self.child_ids, self.parent_ids, self.delays_days):
                handle.write("%s,%s,%.10g\n" % (cid, pid, d))


def _depth_sample(n: int, rng) -> np.ndarray:
    """Shallow-weighted depths: 70% in [0, 70) km, 20% [70, 300), 10% [300, 700)."""
    u = rng.random(n)
    d = np.empty(n)
    shallow = u < 0.7
    mid = (u >= 0.7) & (u < 0.9)
    deep = u >= 0.9
    d[shallow] = rng.random(int(shallow.sum())) * 70.0
    d[mid] = 70.0 + rng.random(int(mid.sum())) * 230.0
    d[deep] = 300.0 + rng.random(int(deep.sum())) * 400.0
    return d


def generate_catalog(cfg: SynthConfig) -> tuple[Catalog, GenerationLog]:
    """Build a catalog plus the parentage log needed to verify labels."""
    cfg.validate()
    rng = make_rng(cfg.seed)
    log = GenerationLog()

    n_main = cfg.n_mainshocks
    half = cfg.spatial_extent / 2.0
    main_t = np.sort(rng.random(n_main)) * cfg.horizon * DAY + EPOCH_2020
    main_lat = cfg.center_lat + (rng.random(n_main) * 2.0 - 1.0) * half
    main_lon = cfg.center_lon + (rng.random(n_main) * 2.0 - 1.0) * half
    main_depth = _depth_sample(n_main, rng)
    main_mag = sample_gr_magnitudes(cfg.b_true, 5.0, cfg.m_max, n_main, rng)

    events = []
    serial = 0
    rule = cfg.tsunami_rule

    def tsunami_flag(mag: float, depth: float) -> bool:
        if mag >= rule.min_magnitude and depth <= rule.max_depth_km:
            return bool(rng.random() < rule.probability)
        return False

    for i in range(n_main):
        main_id = "m%06d" % i
        events.append(Event(
            id=main_id, time=float(main_t[i]),
            latitude=float(np.clip(main_lat[i], -90.0, 90.0)),
            longitude=float(_wrap_lon(main_lon[i])),
            depth=float(main_depth[i]), magnitude=float(main_mag[i]),
            magnitude_type="mw", tsunami=tsunami_flag(main_mag[i], main_depth[i]),
        ))
        log.mainshock_ids.append(main_id)
        log.mainshock_mags.append(float(main_mag[i]))

        rate = cfg.aftershock_productivity * 10.0 ** (
            cfg.productivity_exponent * (main_mag[i] - cfg.productivity_ref_mag))
        n_after = int(min(rng.poisson(rate), cfg.max_aftershocks))
        if n_after == 0:
            log.largest_aftershock_mags.append(float("nan"))
            continue

        forced = max(main_mag[i] - cfg.bath_dm, cfg.m_min)
        delays = sample_omori_times(cfg.p_true, cfg.c_true, n_after, cfg.horizon, rng)
        if n_after > 1 and forced > cfg.m_min:
            # siblings strictly below the forced maximum (inverse CDF never hits the cap)
            child_mags = sample_gr_magnitudes(cfg.b_true, cfg.m_min, forced, n_after - 1, rng)
        else:
            child_mags = np.full(max(n_after - 1, 0), cfg.m_min)
        child_mags = np.append(child_mags, forced)
        rng.shuffle(child_mags)

        off_lat = (rng.random(n_after) * 2.0 - 1.0) * AFTERSHOCK_SCATTER_DEG
        off_lon = (rng.random(n_after) * 2.0 - 1.0) * AFTERSHOCK_SCATTER_DEG
        d_off = (rng.random(n_after) * 2.0 - 1.0) * 10.0
        for j in range(n_after):
            serial += 1
            child_id = "a%07d" % serial
            depth = float(np.clip(main_depth[i] + d_off[j], 0.0, 700.0))
            mag = float(child_mags[j])
            events.append(Event(
                id=child_id,
                time=float(main_t[i] + delays[j] * DAY),
                latitude=float(np.clip(main_lat[i] + off_lat[j], -90.0, 90.0)),
                longitude=float(_wrap_lon(main_lon[i] + off_lon[j])),
                depth=depth, magnitude=mag, magnitude_type="mw",
                tsunami=tsunami_flag(mag, depth),
            ))
            log.child_ids.append(child_id)
            log.parent_ids.append(main_id)
            log.delays_days.append(float(delays[j]))
        log.largest_aftershock_mags.append(float(forced))

    return Catalog(events, magnitude_completeness=cfg.m_min), log


def _wrap_lon(lon: float) -> float:
    w = (lon + 180.0) % 360.0 - 180.0
    return 180.0 if w == -180.0 and lon >= 0 else w
