import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gendim import Metric, Trajectory, generate_trajectory, make_system
from gendim.errors import FitError, InsufficientDataError
from gendim.evt import (LocalDimSample, TailEstimate, block_maxima, dq_from_gev, dq_from_local_dims,
                        exceedance_tail, exceedances, fit_gev, gev_gradient, gev_loglik, gev_stderr,
                        local_dimension_pot, local_dimensions, phi, phi_product, pot_dimension,
                        product_phi, sample_block_maxima, sample_tails, tau_from_tail)


def gumbel(rng, loc, scale, n):
    return loc - scale * np.log(-np.log(rng.random(n)))


def test_phi_examples():
    assert phi((0.0,), (1.0,)) == 0.0
    assert phi((0.0,), (math.exp(-3),)) == pytest.approx(3.0)
    assert phi((0.0, 0.0), (0.5, 0.5), Metric.TORUS) == pytest.approx(-math.log(math.sqrt(0.5)))
    assert phi((0.2,), (0.2,)) == math.inf


def test_phi_product_examples():
    a, b = np.array([0.1, 0.2]), np.array([0.4, 0.6])
    assert phi_product([a, b]) == phi(a, b)
    pts = [[0.0], [math.exp(-1)], [math.exp(-2)]]
    assert phi_product(pts) == pytest.approx(1.0)
    assert phi_product([[0.5], [0.5 + 1e-4], [0.5 - 5e-4]], Metric.INTERVAL) >= math.log(1e3)
    with pytest.raises(ValueError):
        phi_product([[0.1]])


def test_product_phi_matches_pointwise():
    s = make_system("arnold-cat")
    trajs = [generate_trajectory(s, 1, 200, stream=i) for i in range(3)]
    v = product_phi(trajs)
    ref = [phi_product([t.states[j] for t in trajs], Metric.TORUS) for j in range(200)]
    np.testing.assert_allclose(v, ref, rtol=0, atol=0)


def test_tail_basic_properties():
    s = make_system("arnold-cat")
    trajs = [generate_trajectory(s, 2, 10 ** 5, stream=i) for i in range(2)]
    u = np.linspace(-2.0, 8.0, 41)
    t = exceedance_tail(trajs, u)
    assert t.sf[0] == 1.0
    assert np.all(np.diff(t.sf) <= 0) and np.all((t.sf >= 0) & (t.sf <= 1))
    big = exceedance_tail(trajs, [50.0, 60.0])
    assert np.all(big.counts == 0) and np.all(big.flagged)


@pytest.mark.parametrize("q", [2, 3])
def test_cat_tail_slope(q):
    tails = sample_tails(make_system("arnold-cat"), [q], 2 * 10 ** 6, np.arange(0, 8, 0.1), seed=4)
    tau, se, _ = tau_from_tail(tails[q])
    assert tau == pytest.approx(2 * (q - 1), rel=0.05)


def test_tau_from_synthetic_tail():
    u = np.linspace(0, 5, 26)
    n = 10 ** 9
    t = TailEstimate(2, u, np.round(n * np.exp(-2 * u)).astype(np.int64), n)
    assert tau_from_tail(t, u_range=(0.5, 5))[0] == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(FitError):
        tau_from_tail(t, u_range=(0.5, 0.6))


def test_exceedances_threshold_and_quantile():
    x = np.arange(100.0)
    rec = exceedances(x, threshold=94.5)
    np.testing.assert_array_equal(rec.indices, [95, 96, 97, 98, 99])
    rec = exceedances(x, quantile=0.9)
    assert rec.threshold == pytest.approx(np.quantile(x, 0.9))
    with pytest.raises(ValueError):
        exceedances(x)


def test_pot_inverse_mean():
    assert pot_dimension(np.full(10, 0.5)) == 2.0
    rng = np.random.default_rng(3)
    for n in (200, 2000):
        e = rng.exponential(0.5, n)
        assert abs(pot_dimension(e) - 2.0) < 2 * 2.0 / math.sqrt(n) * 2
    with pytest.raises(InsufficientDataError):
        pot_dimension([])


@pytest.fixture(scope="module")
def cat_orbit():
    return generate_trajectory(make_system("arnold-cat"), 6, 2 * 10 ** 5)


def test_cat_local_dimension(cat_orbit):
    d, r_cut, n = local_dimension_pot(cat_orbit, (0.3, 0.7), 0.98)
    assert d == pytest.approx(2.0, rel=0.1)
    assert n >= 50 and 0 < r_cut < 0.5


def test_sierpinski_vertex_local_dimension():
    x = generate_trajectory(make_system("sierpinski"), 2, 10 ** 6)
    d, _, _ = local_dimension_pot(x, (0.0, 0.0), 0.995)
    assert d == pytest.approx(1.0, rel=0.15)


def test_pot_insufficient_data(cat_orbit):
    with pytest.raises(InsufficientDataError) as exc:
        local_dimension_pot(Trajectory(cat_orbit.states[:1000], system=cat_orbit.system), (0.3, 0.7), 0.98)
    assert exc.value.count < 50


def test_local_dimensions_match_direct_computation(cat_orbit):
    x = Trajectory(cat_orbit.states[:5000], system=cat_orbit.system)
    idx = np.array([3, 100, 2500])
    s = local_dimensions(x, 0.97, center_indices=idx, window=2, min_exceedances=10)
    for k, i in enumerate(idx):
        keep = np.abs(np.arange(5000) - i) > 2
        d = np.array([phi(x.states[i], y, Metric.TORUS) for y in x.states[keep]])
        u = np.quantile(d, 0.97)
        e = d[d > u] - u
        assert s.d1r[k] == pytest.approx(1.0 / e.mean(), rel=1e-10)
        assert s.r_cut[k] == pytest.approx(math.exp(-u), rel=1e-12)


def brute_dq(d, r, q):
    total = 0.0
    for v in d:
        total += r ** ((q - 1) * v)
    return math.log(total / len(d)) / ((q - 1) * math.log(r))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.2, 3.0), min_size=1, max_size=200), st.floats(1e-4, 0.5),
       st.sampled_from([-3.0, -1.0, 0.0, 0.5, 2.0, 3.0, 5.0]))
def test_dq_from_local_dims_oracle(d, r, q):
    d = np.array(d)
    s = LocalDimSample(np.zeros((d.size, 1)), d, np.full(d.size, r), np.full(d.size, 60))
    v = dq_from_local_dims(s, q)
    assert v == pytest.approx(brute_dq(d, r, q), rel=1e-9, abs=1e-12)
    perm = np.random.default_rng(0).permutation(d.size)
    s2 = LocalDimSample(s.centers[perm], d[perm], s.r_cut[perm], s.n_exceedances[perm])
    assert dq_from_local_dims(s2, q) == pytest.approx(v, rel=1e-12, abs=1e-14)
    assert d.min() - 1e-9 <= v <= d.max() + 1e-9


def test_dq_limits_and_constant_sample():
    d = np.array([1.0, 1.5, 2.5])
    s = LocalDimSample(np.zeros((3, 1)), d, np.full(3, 0.01), np.full(3, 60))
    assert dq_from_local_dims(s, math.inf) == 1.0 and dq_from_local_dims(s, -math.inf) == 2.5
    assert dq_from_local_dims(s, 1) == pytest.approx(d.mean())
    assert dq_from_local_dims(s, 60) < dq_from_local_dims(s, 2) < dq_from_local_dims(s, -60)
    c = LocalDimSample(np.zeros((3, 1)), np.full(3, 1.7), np.full(3, 0.01), np.full(3, 60))
    for q in (-2.0, 0.0, 2.0, 4.0):
        assert dq_from_local_dims(c, q) == pytest.approx(1.7, rel=1e-12)


def test_local_dim_csv(tmp_path, cat_orbit):
    x = Trajectory(cat_orbit.states[:5000], system=cat_orbit.system)
    s = local_dimensions(x, 0.97, center_indices=[1, 2], min_exceedances=10)
    s.to_csv(tmp_path / "l.csv", comment="h")
    assert (tmp_path / "l.csv").read_text().splitlines()[1] == "z0,z1,d1r,r_cut,n_exceedances"


def test_block_maxima_examples():
    np.testing.assert_array_equal(block_maxima(np.full(100, 3.0), 10), np.full(10, 3.0))
    np.testing.assert_array_equal(block_maxima(np.arange(1.0, 51.0), 5)[:2], [5.0, 10.0])
    with pytest.raises(InsufficientDataError):
        block_maxima(np.arange(1.0, 11.0), 5)


def test_gev_fit_on_gumbel():
    x = gumbel(np.random.default_rng(1), 3.0, 0.5, 10 ** 5)
    fit = fit_gev(x)
    assert fit.mu == pytest.approx(3.0, abs=0.01)
    assert fit.sigma == pytest.approx(0.5, abs=0.01)
    assert fit.xi == pytest.approx(0.0, abs=0.02)
    assert fit.grad_norm < 1e-6 and fit.converged


@pytest.mark.parametrize("theta", [(3.0, 0.5, 0.0), (3.1, 0.45, 0.05), (2.9, 0.55, -0.1), (3.0, 0.5, 1e-5)])
def test_gev_gradient_matches_finite_differences(theta):
    x = gumbel(np.random.default_rng(2), 3.0, 0.5, 2000)
    theta = np.array(theta)
    g = gev_gradient(theta, x)
    fd = np.empty(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1e-5
        fd[k] = (gev_loglik(theta + e, x) - gev_loglik(theta - e, x)) / 2e-5
    np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-4 * np.abs(fd).max())


def test_gev_degenerate_sample():
    with pytest.raises(FitError):
        fit_gev(np.full(100, 2.0))
    with pytest.raises(InsufficientDataError):
        fit_gev(np.arange(5.0))


def test_gumbel_max_stability():
    rng = np.random.default_rng(7)
    x = gumbel(rng, 0.0, 0.8, 10 ** 6)
    fit = fit_gev(block_maxima(x, 100))
    se = gev_stderr(fit, block_maxima(x, 100))
    assert abs(fit.sigma - 0.8) < 2 * se[1] * 1.5
    assert fit.mu == pytest.approx(0.8 * math.log(100), abs=0.05)


def test_dq_from_gev_formula():
    from gendim.evt import GevFitResult
    fit = GevFitResult(4.0, 0.5, 0.0, 0.0, 100)
    d, cross = dq_from_gev(fit, 2, 1000)
    assert d == 2.0 and cross == pytest.approx(math.log(1000) / 4.0)
    with pytest.raises(ValueError):
        dq_from_gev(fit, 1, 1000)


def test_sierpinski_block_maxima_scale():
    m = sample_block_maxima(make_system("sierpinski"), [2], 4 * 10 ** 6, 2000, seed=3)
    assert m[2].size == 2000
    fit = fit_gev(m[2])
    assert 1 / fit.sigma == pytest.approx(math.log2(8 / 3), rel=0.1)


def test_lorenz_d2():
    m = sample_block_maxima(make_system("lorenz63"), [2], 4 * 10 ** 6, 2000, seed=1)
    d, _ = dq_from_gev(fit_gev(m[2]), 2, 2000)
    assert d == pytest.approx(2.0, abs=0.1)
