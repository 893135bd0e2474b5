import numpy as np
import pytest

from poseidon.catalog import Catalog, Event
from poseidon.errors import InvalidInputError
from poseidon.gridenc import (
    CHANNELS, ContextGrid, SCALES_DAYS, build_multiscale, build_scale_grid,
    dump_grid, grid_dims, load_grid, normalize_for_model,
)

DAY = 86400.0
T0 = 1577836800.0


def _ev(i, t, mag, lat=10.0, lon=20.0, depth=12.0):
    return Event(id=f"g{i}", time=t, latitude=lat, longitude=lon,
                 depth=depth, magnitude=mag)


def _cell(lat, lon, cell):
    return int((lat + 90) // cell), int((lon + 180) // cell)


def test_single_event_statistics():
    cat = Catalog([_ev(0, T0 - 2 * DAY, 5.0)])
    g = build_scale_grid(cat, T0, 7.0, cell_size=2.0)
    r, c = _cell(10.0, 20.0, 2.0)
    assert g[0, r, c] == 1.0
    assert g[1, r, c] == pytest.approx(5.0)
    assert g[2, r, c] == pytest.approx(np.log10(1 + 10 ** 12.3))
    assert g[2, r, c] == pytest.approx(12.3, abs=1e-9)
    assert g[3, r, c] == pytest.approx(12.0)
    assert g[5, r, c] == 0.0


def test_empty_window_all_zero():
    cat = Catalog([_ev(0, T0 + 10 * DAY, 5.0)])  # strictly after t
    g = build_scale_grid(cat, T0, 7.0, cell_size=4.0)
    assert not g.any()


def test_two_event_variance_population():
    cat = Catalog([_ev(0, T0 - 2 * DAY, 4.0), _ev(1, T0 - 1 * DAY, 6.0)])
    g = build_scale_grid(cat, T0, 7.0, cell_size=2.0)
    r, c = _cell(10.0, 20.0, 2.0)
    assert g[1, r, c] == pytest.approx(6.0)
    assert g[5, r, c] == pytest.approx(1.0)  # population variance of {4, 6}


def test_multiscale_shape_and_order():
    cat = Catalog([_ev(0, T0 - 2 * DAY, 5.0)])
    grid = build_multiscale(cat, T0, cell_size=2.0)
    assert grid.data.shape == (18, 90, 180)
    grid4 = build_multiscale(cat, T0, cell_size=4.0)
    assert grid4.data.shape == (18, 45, 90)


def test_window_boundary_half_open():
    exactly_7d = _ev(0, T0 - 7 * DAY, 5.0)
    at_t = _ev(1, T0, 6.0)
    cat = Catalog([exactly_7d, at_t])
    g = build_scale_grid(cat, T0, 7.0, cell_size=2.0)
    r, c = _cell(10.0, 20.0, 2.0)
    assert g[0, r, c] == 1.0  # boundary event included
    assert g[1, r, c] == pytest.approx(5.0)  # the t event excluded


def test_nested_window_monotonicity():
    rng = np.random.default_rng(4)
    events = [_ev(i, T0 - float(rng.uniform(0, 120)) * DAY, 4.0,
                  lat=float(rng.uniform(-30, 30)), lon=float(rng.uniform(-30, 30)))
              for i in range(300)]
    cat = Catalog(events)
    grid = build_multiscale(cat, T0, cell_size=4.0).data
    counts = [grid[int(s * len(CHANNELS))] for s in range(3)]
    assert np.all(counts[0] <= counts[1]) and np.all(counts[1] <= counts[2])


def test_mass_conservation():
    rng = np.random.default_rng(5)
    n_in = 0
    events = []
    for i in range(500):
        dt = float(rng.uniform(-40, 10)) * DAY
        if -30.0 * DAY <= dt < 0:
            n_in += 1
        events.append(_ev(i, T0 + dt, 4.5, lat=float(rng.uniform(-89, 89)),
                          lon=float(rng.uniform(-179, 179))))
    g = build_scale_grid(Catalog(events), T0, 30.0, cell_size=4.0)
    assert g[0].sum() == n_in


def test_translation_consistency():
    rng = np.random.default_rng(6)
    events = [_ev(i, T0 - float(rng.uniform(0, 80)) * DAY, 5.0,
                  lat=float(rng.uniform(-10, 10)), lon=float(rng.uniform(-10, 10)))
              for i in range(100)]
    shift = 123.456 * DAY
    g1 = build_multiscale(Catalog(events), T0, cell_size=4.0).data
    moved = [Event(id=e.id, time=e.time + shift, latitude=e.latitude,
                   longitude=e.longitude, depth=e.depth, magnitude=e.magnitude)
             for e in events]
    g2 = build_multiscale(Catalog(moved), T0 + shift, cell_size=4.0).data
    np.testing.assert_array_equal(g1, g2)


def test_activity_trend_recent_half():
    # 3 events in the last 3.5 d, 1 event earlier in the 7 d window
    events = [_ev(0, T0 - 6 * DAY, 4.0)] + [_ev(i, T0 - i * 0.5 * DAY, 4.0) for i in (1, 2, 3)]
    g = build_scale_grid(Catalog(events), T0, 7.0, cell_size=2.0)
    r, c = _cell(10.0, 20.0, 2.0)
    assert g[4, r, c] == pytest.approx(3.0 / 4.0)


def test_grid_dims_validation():
    assert grid_dims(2.0) == (90, 180)
    with pytest.raises(InvalidInputError):
        grid_dims(7.0)


def test_tau_must_be_positive():
    with pytest.raises(InvalidInputError):
        build_scale_grid(Catalog([]), T0, 0.0, 2.0)


def test_normalize_for_model_scales():
    data = np.zeros((18, 4, 4))
    data[0, 0, 0] = 99.0       # count
    data[1, 0, 0] = 5.0        # max mag
    data[2, 0, 0] = 12.3       # log energy
    data[3, 0, 0] = 350.0      # depth
    data[5, 0, 0] = 2.5        # variance
    out = normalize_for_model(data)
    assert out[0, 0, 0] == pytest.approx(2.0)
    assert out[1, 0, 0] == pytest.approx(0.5)
    assert out[2, 0, 0] == pytest.approx(0.615)
    assert out[3, 0, 0] == pytest.approx(0.5)
    assert out[5, 0, 0] == pytest.approx(0.25)


def test_binary_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.random((18, 45, 90))
    grid = ContextGrid(data=data, cell_size=4.0, reference_time=T0)
    path = tmp_path / "g.pgrd"
    dump_grid(grid, path)
    raw = path.read_bytes()
    assert raw[:4] == b"PGRD"
    assert len(raw) == 16 + 18 * 45 * 90 * 4
    loaded = load_grid(path)
    np.testing.assert_allclose(loaded, data.astype(np.float32), rtol=1e-6)
