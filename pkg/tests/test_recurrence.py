import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gendim import Metric, Trajectory, distances_to, generate_trajectory, make_system
from gendim.recurrence import (RadiusGrid, ScalingTable, SpatialHash, ball_counts, build_index,
                               correlation_integral, first_return_integral, hit_times,
                               hitting_integral, mean_return_time, power_prefix)
from gendim.scaling import fit_tau


def brute_counts(targets, samples, radii):
    out = np.zeros((len(targets), len(radii)), dtype=np.int64)
    for l, z in enumerate(targets.states):
        d = distances_to(samples.metric, samples.states, z)
        for k, r in enumerate(radii):
            out[l, k] = np.count_nonzero(d < r)
    return out


def brute_gamma(targets, samples, radii, q):
    mu = brute_counts(targets, samples, radii) / float(len(samples))
    out = []
    for k in range(len(radii)):
        m = mu[:, k]
        if q < 1:
            m = m[m > 0]
        out.append(math.log(np.mean(m ** (q - 1.0))))
    return np.array(out)


def brute_upsilon(targets, samples, radii, q, H):
    """Walk the sample orbit point by point."""
    out = []
    for r in radii:
        vals = []
        for z in targets.states:
            d = distances_to(samples.metric, samples.states, z)
            visits = [n for n in range(1, len(samples)) if d[n] < r][:H]
            if not visits:
                continue
            total = 0.0
            for j in range(visits[-1]):
                nxt = next(v for v in visits if v > j)
                total += float(nxt - j) ** (1.0 - q)
            vals.append(total / visits[-1])
        out.append(math.log(np.mean(vals)))
    return np.array(out)


@pytest.fixture(scope="module")
def cat_small():
    s = make_system("arnold-cat")
    return generate_trajectory(s, 2, 60, stream=0), generate_trajectory(s, 2, 1000, stream=1)


def test_radius_grid():
    g = RadiusGrid()
    assert g.values[0] == 0.1 and g.values.size == 12
    assert np.all(np.diff(g.values) < 0)
    s = RadiusGrid.spanning(1e-3, 1e-1, 5)
    assert s.values[0] == pytest.approx(0.1) and s.values[-1] == pytest.approx(1e-3)
    with pytest.raises(ValueError):
        RadiusGrid(ratio=1.5)
    with pytest.raises(ValueError):
        RadiusGrid.spanning(0.1, 0.01, 4)


@pytest.mark.parametrize("name", ["arnold-cat", "henon", "three-x", "lorenz63"])
def test_ball_counts_match_brute_force(name):
    s = make_system(name)
    t = generate_trajectory(s, 3, 50, stream=0)
    x = generate_trajectory(s, 3, 1000, stream=1)
    radii = np.array([0.5, 0.2, 0.1, 0.05]) * (30 if name == "lorenz63" else 1)
    np.testing.assert_array_equal(ball_counts(t, x, radii), brute_counts(t, x, radii))


@pytest.mark.parametrize("q", [-1.0, 0.0, 0.5, 2.0, 3.0])
def test_correlation_integral_matches_brute_force(cat_small, q):
    t, x = cat_small
    radii = RadiusGrid(0.2, 0.7, 5).values
    tab = correlation_integral(t, x, radii, [q])
    np.testing.assert_array_equal(tab.log_values[tab.row(q)], brute_gamma(t, x, radii, q))


@pytest.mark.parametrize("q", [-1.0, 0.0, 0.5, 1.5, 2.0, 3.0])
def test_hitting_integral_matches_walk(cat_small, q):
    t, x = cat_small
    radii = np.array([0.2, 0.1, 0.06])
    tab = hitting_integral(t, x, radii, [q], H=5)
    np.testing.assert_allclose(tab.log_values[tab.row(q)], brute_upsilon(t, x, radii, q, 5), rtol=1e-12)


def test_periodic_orbit_hitting_times():
    x = Trajectory(np.tile([0.1, 0.5, 0.9], 20))
    z = Trajectory(np.array([[0.1]]))
    rec = hit_times(x, [0.1], 0.05, 4)
    np.testing.assert_array_equal(rec.hit_times, [3, 6, 9, 12])
    tab = hitting_integral(z, x, [0.05, 0.04], [0.0, -1.0], H=4)
    # hitting times cycle 3, 2, 1
    np.testing.assert_allclose(np.exp(tab.log_values[tab.row(0.0)]), 2.0)
    np.testing.assert_allclose(np.exp(tab.log_values[tab.row(-1.0)]), 14.0 / 3.0)


def test_truncation_and_dropping():
    x = Trajectory(np.linspace(0.0, 0.99, 100))
    z = Trajectory(np.array([[0.5], [5.0]]))
    tab = hitting_integral(z, x, [0.02, 0.015], [0.0], H=32)
    assert np.all(tab.n_dropped == 1)
    assert tab.meta["truncated"] == [2, 2]
    assert not tab.flagged.any()


def test_q_below_one_drops_empty_balls():
    x = Trajectory(np.linspace(0.0, 0.5, 200))
    z = Trajectory(np.array([[0.25], [0.9]]))
    tab = correlation_integral(z, x, [0.1, 0.05], [0.0, 2.0])
    assert np.all(tab.n_dropped[0] == 1) and np.all(tab.flagged[0])
    assert not tab.flagged[1].any()


def test_kac_mean_return_time():
    x = generate_trajectory(make_system("three-x"), 8, 10 ** 6)
    r = 0.01
    rec = hit_times(x, [0.37], r, 10 ** 6)
    gaps = np.diff(rec.hit_times)
    assert gaps.mean() == pytest.approx(1 / (2 * r), rel=0.05)


def test_return_times_are_first_returns():
    x = generate_trajectory(make_system("three-x"), 8, 20000)
    idx = np.arange(0, 300, 7)
    t = mean_return_time(x, idx, 0.02)
    for i, ti in zip(idx, t):
        d = distances_to(x.metric, x.states[i + 1:], x.states[i])
        hits = np.nonzero(d < 0.02)[0]
        assert ti == (hits[0] + 1 if hits.size else 0)


def test_first_return_integral_dimension():
    x = generate_trajectory(make_system("three-x"), 1, 2 * 10 ** 5)
    tab = first_return_integral(x, RadiusGrid.spanning(1e-3, 1e-2, 6), [0.0], n_centers=5000)
    tau, _ = fit_tau(tab, 0.0)
    assert tau == pytest.approx(-1.0, abs=0.05)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.lists(st.floats(1e-3, 0.7), min_size=2, max_size=6, unique=True))
def test_counts_monotone_in_radius(seed, radii):
    rng = np.random.default_rng(seed)
    x = Trajectory(rng.random((300, 2)), system=make_system("arnold-cat"))
    t = Trajectory(rng.random((20, 2)))
    radii = np.sort(radii)[::-1]
    c = ball_counts(t, x, radii, build_index(x, radii))
    assert np.all(np.diff(c, axis=1) <= 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.integers(1, 200))
def test_power_prefix(e, g):
    p = power_prefix(e, g)
    assert p[0] == 0
    assert p[g] == pytest.approx(sum(m ** e for m in range(1, g + 1)), rel=1e-12)


def test_spatial_hash_rejects_high_dimension():
    with pytest.raises(ValueError):
        SpatialHash(np.zeros((10, 4)), 0.1, Metric.EUCLIDEAN)


def test_scaling_table_csv_roundtrip(tmp_path, cat_small):
    t, x = cat_small
    tab = correlation_integral(t, x, [0.3, 0.2, 0.1], [0.0, 2.0])
    tab.to_csv(tmp_path / "t.csv", comment="x")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[1] == "q,r,log_r,log_value,n_dropped,flagged"
    back = ScalingTable.from_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.log_values, tab.log_values)
    np.testing.assert_array_equal(back.radii, tab.radii)
