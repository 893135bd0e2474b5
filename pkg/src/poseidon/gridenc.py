"""Multi-scale spatiotemporal context grids.

For a reference time t, the half-open window [t - tau days, t) of catalog
events is rasterized onto a global lat/lon grid for each temporal scale
tau in {7, 30, 90} days. Each scale contributes six channels per cell:

    0 event_count        number of in-window events
    1 max_magnitude      largest magnitude (0 for empty cells)
    2 log_cum_energy     log10(1 + sum of per-event energies in Joules)
    3 mean_depth         mean hypocenter depth, km (0 for empty cells)
    4 activity_trend     count in the most recent tau/2 / max(count, 1)
    5 magnitude_variance population variance of magnitudes

Raw energies span many orders of magnitude, so the energy channel is
stored on the log scale cell by cell. The three scales are concatenated
channel-first into an (18, H, W) tensor, scale-major in the order
7, 30, 90. Events exactly at t are excluded: inputs never see the
reference event or anything after it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog
from .errors import InvalidInputError

SCALES_DAYS = (7.0, 30.0, 90.0)
CHANNELS = ("event_count", "max_magnitude", "log_cumulative_energy",
            "mean_depth", "activity_trend", "magnitude_variance")
DAY = 86400.0
GRID_MAGIC = b"PGRD"
GRID_VERSION = 1

#: divisors applied when a grid becomes model input, chosen to put every
#: channel on a roughly unit scale (counts are log-compressed instead)
MODEL_SCALE = np.array([1.0, 10.0, 20.0, 700.0, 1.0, 10.0])


@dataclass(frozen=True)
class ContextGrid:
    data: np.ndarray  # (18, H, W) float64
    cell_size: float
    reference_time: float

    @property
    def shape(self):
        return self.data.shape


def grid_dims(cell_size: float) -> tuple[int, int]:
    rows = 180.0 / cell_size
    cols = 360.0 / cell_size
    if abs(rows - round(rows)) > 1e-9 or abs(cols - round(cols)) > 1e-9:
        raise InvalidInputError(f"cell_size {cell_size} must evenly divide 180 and 360 degrees")
    return int(round(rows)), int(round(cols))


def _cell_indices(lats, lons, cell_size, rows, cols):
    r = np.minimum((lats + 90.0) // cell_size, rows - 1).astype(np.int64)
    c = np.minimum((lons + 180.0) // cell_size, cols - 1).astype(np.int64)
    return r * cols + c


def build_scale_grid(catalog: Catalog, t: float, tau: float, cell_size: float = 2.0) -> np.ndarray:
    """(6, H, W) statistics of events with t - tau days <= t_i < t."""
    if tau <= 0:
        raise InvalidInputError(f"tau must be positive, got {tau}")
    rows, cols = grid_dims(cell_size)
    out = np.zeros((len(CHANNELS), rows, cols))

    lo = int(np.searchsorted(catalog.times, t - tau * DAY, side="left"))
    hi = int(np.searchsorted(catalog.times, t, side="left"))
    if hi <= lo:
        return out
    sl = slice(lo, hi)
    flat = _cell_indices(catalog.lats[sl], catalog.lons[sl], cell_size, rows, cols)
    n = rows * cols

    count = np.bincount(flat, minlength=n)
    mag = catalog.mags[sl]
    energy = np.bincount(flat, weights=catalog.energies[sl], minlength=n)
    depth_sum = np.bincount(flat, weights=catalog.depths[sl], minlength=n)
    mag_sum = np.bincount(flat, weights=mag, minlength=n)
    mag_sq = np.bincount(flat, weights=mag * mag, minlength=n)

    max_mag = np.zeros(n)
    np.maximum.at(max_mag, flat, mag)

    recent_lo = int(np.searchsorted(catalog.times, t - tau * DAY / 2.0, side="left"))
    recent = np.bincount(flat[recent_lo - lo:], minlength=n) if recent_lo < hi else np.zeros(n)

    occupied = count > 0
    mean_depth = np.where(occupied, depth_sum / np.maximum(count, 1), 0.0)
    mean_mag = mag_sum / np.maximum(count, 1)
    variance = np.where(occupied, np.maximum(mag_sq / np.maximum(count, 1) - mean_mag ** 2, 0.0), 0.0)

    out[0] = count.reshape(rows, cols)
    out[1] = max_mag.reshape(rows, cols)
    out[2] = np.log10(1.0 + energy).reshape(rows, cols)
    out[3] = mean_depth.reshape(rows, cols)
    out[4] = (recent / np.maximum(count, 1)).reshape(rows, cols)
    out[5] = variance.reshape(rows, cols)
    return out


def build_multiscale(catalog: Catalog, t: float, cell_size: float = 2.0) -> ContextGrid:
    """Concatenate the 7 / 30 / 90 day scale grids into (18, H, W)."""
    parts = [build_scale_grid(catalog, t, tau, cell_size) for tau in SCALES_DAYS]
    return ContextGrid(data=np.concatenate(parts, axis=0), cell_size=cell_size, reference_time=t)


def normalize_for_model(data: np.ndarray) -> np.ndarray:
    """Channel-wise rescaling applied before a grid enters the encoder.

    Counts pass through log10(1 + n); the remaining channels divide by a
    fixed per-channel scale so conv inputs stay near unit magnitude.
    """
    n_scales = data.shape[0] // len(CHANNELS)
    out = np.empty_like(data)
    for s in range(n_scales):
        base = s * len(CHANNELS)
        out[base + 0] = np.log10(1.0 + data[base + 0])
        for ch in range(1, len(CHANNELS)):
            out[base + ch] = data[base + ch] / MODEL_SCALE[ch]
    return out


def dump_grid(grid: ContextGrid, path) -> None:
    """Binary dump: 16-byte header (magic, version, H, W), then float32
    values in C order (scale, channel, row, col), little-endian."""
    _, h, w = grid.data.shape
    with open(path, "wb") as handle:
        handle.write(GRID_MAGIC)
        handle.write(struct.pack("<III", GRID_VERSION, h, w))
        handle.write(grid.data.astype("<f4").tobytes(order="C"))


def load_grid(path) -> np.ndarray:
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != GRID_MAGIC:
            raise InvalidInputError(f"not a grid dump: bad magic {magic!r}")
        version, h, w = struct.unpack("<III", handle.read(12))
        if version != GRID_VERSION:
            raise InvalidInputError(f"unsupported grid dump version {version}")
        raw = np.frombuffer(handle.read(), dtype="<f4")
    return raw.reshape(len(SCALES_DAYS) * len(CHANNELS), h, w).astype(np.float64)
