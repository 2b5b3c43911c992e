"""Extreme-value estimators built on the observable ``phi = -log d``.

Exceedance tails and block maxima are computed on q-fold products of
independent copies of a system; local dimensions come from peaks over a
quantile threshold of ``phi_z`` along a single orbit.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
from numba import njit, prange
from scipy.optimize import minimize
from scipy.special import logsumexp

from .dynsys import METRIC_CODES, Metric, SystemSpec, Trajectory, TrajectoryStream, _distance
from .errors import FitError, InsufficientDataError
from .scaling import ols

EULER_GAMMA = 0.5772156649015329
MIN_EXCEEDANCES = 50
MIN_BLOCKS = 10


# ---------------------------------------------------------------------------
# observables


def phi(z, x, metric=Metric.EUCLIDEAN) -> float:
    """``-log d(x, z)``; ``+inf`` when the points coincide."""
    a = np.atleast_1d(np.asarray(z, dtype=np.float64))
    b = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = _distance(a, b, METRIC_CODES[Metric(metric)])
    return math.inf if d == 0.0 else -math.log(d)


def phi_product(points, metric=Metric.EUCLIDEAN) -> float:
    """``-log max_{i>=2} d(x_1, x_i)`` for the rows ``x_1..x_q`` of ``points``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise ValueError("the product observable needs q >= 2 points")
    mcode = METRIC_CODES[Metric(metric)]
    d = max(_distance(pts[0], pts[i], mcode) for i in range(1, pts.shape[0]))
    return math.inf if d == 0.0 else -math.log(d)


@njit(cache=True, parallel=True)
def _fold_phi(streams, mcode, out):
    """``out[k-2, j] = -log max_{2<=i<=k} d(x_j^(1), x_j^(i))`` for every fold k."""
    n_streams, n = streams.shape[0], streams.shape[1]
    for j in prange(n):
        dmax = 0.0
        for i in range(1, n_streams):
            d = _distance(streams[0, j], streams[i, j], mcode)
            if d > dmax:
                dmax = d
            out[i - 1, j] = -math.log(dmax) if dmax > 0.0 else math.inf


def product_phi(trajectories: Sequence[Trajectory]) -> np.ndarray:
    """Product observable along ``q`` equal-length trajectories, one value per
    time index."""
    if len(trajectories) < 2:
        raise ValueError("need at least two trajectories")
    n = len(trajectories[0])
    if any(len(t) != n for t in trajectories):
        raise ValueError("trajectories must have equal length")
    stack = np.ascontiguousarray(np.stack([t.states for t in trajectories]))
    out = np.empty((len(trajectories) - 1, n))
    _fold_phi(stack, METRIC_CODES[trajectories[0].metric], out)
    return out[-1]


class ProductSampler:
    """Streams the product observable for every fold ``q = 2..q_max`` at once.

    Copy ``i`` of the system uses the generator stream ``stream0 + i`` of
    ``seed``; the fold-``q`` series is built from the first ``q`` copies, so
    one pass serves all folds.
    """

    def __init__(self, system: SystemSpec, q_max: int, seed: int, stream0: int = 0,
                 burn_in: int = 1000):
        if q_max < 2:
            raise ValueError("q_max must be at least 2")
        self.system = system
        self.q_max = q_max
        self.mcode = METRIC_CODES[system.metric]
        self.streams = [TrajectoryStream(system, seed, stream=stream0 + i, burn_in=burn_in)
                        for i in range(q_max)]

    def chunks(self, total: int, chunk: int = 1 << 20) -> Iterator[np.ndarray]:
        """Yield arrays of shape ``(q_max - 1, m)``; row ``q - 2`` is fold ``q``."""
        done = 0
        while done < total:
            m = min(chunk, total - done)
            stack = np.stack([s.advance(m) for s in self.streams])
            out = np.empty((self.q_max - 1, m))
            _fold_phi(stack, self.mcode, out)
            done += m
            yield out


def replica_stream0(replica: int, q_max: int) -> int:
    """First generator stream of a replica; replicas never share streams."""
    return replica * q_max


# ---------------------------------------------------------------------------
# exceedance tails


@dataclass
class TailEstimate:
    """Sampled survival function ``F(u) = P(phi > u)`` of the fold-``q`` observable."""

    q: int
    u: np.ndarray
    counts: np.ndarray
    n: int

    @property
    def sf(self) -> np.ndarray:
        return self.counts / float(self.n)

    @property
    def flagged(self) -> np.ndarray:
        return self.counts == 0


def _tail_counts(values, u):
    idx = np.searchsorted(u, values, side="left")
    hist = np.bincount(idx, minlength=u.size + 1)
    # values with idx > k exceed u[k]
    return np.cumsum(hist[::-1])[::-1][1:].astype(np.int64)


def exceedance_tail(trajectories: Sequence[Trajectory], u_grid) -> TailEstimate:
    """Fraction of time indices where the product observable exceeds each ``u``."""
    u = np.asarray(u_grid, dtype=float)
    if np.any(np.diff(u) <= 0):
        raise ValueError("u_grid must be strictly increasing")
    vals = product_phi(trajectories)
    return TailEstimate(len(trajectories), u, _tail_counts(vals, u), vals.size)


def sample_tails(system: SystemSpec, q_list, length: int, u_grid, seed: int,
                 replicas: int = 1, chunk: int = 1 << 20) -> dict:
    """Exceedance tails of all folds in ``q_list`` pooled over independent
    replicas of ``length`` steps each; returns ``{q: TailEstimate}``."""
    q_list = [int(q) for q in q_list]
    u = np.asarray(u_grid, dtype=float)
    q_max = max(q_list)
    counts = {q: np.zeros(u.size, dtype=np.int64) for q in q_list}
    for rep in range(replicas):
        sampler = ProductSampler(system, q_max, seed, replica_stream0(rep, q_max))
        for block in sampler.chunks(length, chunk):
            for q in q_list:
                counts[q] += _tail_counts(block[q - 2], u)
    return {q: TailEstimate(q, u, counts[q], length * replicas) for q in q_list}


def tau_from_tail(tail: TailEstimate, u_range: Optional[tuple] = None,
                  min_count: int = 100, max_sf: float = 0.1):
    """``tau(q) = -d log F / du`` by least squares; returns ``(tau, stderr, (u_lo, u_hi))``.

    Without ``u_range`` the fit uses every grid point with ``F <= max_sf``
    and at least ``min_count`` exceedances.
    """
    u, c = tail.u, tail.counts
    use = c > 0
    if u_range is not None:
        use &= (u >= u_range[0]) & (u <= u_range[1])
    else:
        use &= (tail.sf <= max_sf) & (c >= min_count)
    if np.count_nonzero(use) < 3:
        raise FitError(f"q={tail.q}: fewer than three usable tail points")
    _, b, _, se = ols(u[use], np.log(tail.sf[use]))
    return -b, se, (float(u[use].min()), float(u[use].max()))


# ---------------------------------------------------------------------------
# peaks over threshold


@dataclass
class ExceedanceRecord:
    threshold: float
    values: np.ndarray
    indices: np.ndarray
    series_len: int
    quantile: Optional[float] = None

    @property
    def count(self) -> int:
        return int(self.values.size)


def exceedances(series, threshold: Optional[float] = None,
                quantile: Optional[float] = None) -> ExceedanceRecord:
    """Values of ``series`` strictly above a threshold, given directly or as
    a quantile (linear interpolation between order statistics).  Infinite
    entries are ignored for the quantile but kept as exceedances."""
    x = np.asarray(series, dtype=float)
    if (threshold is None) == (quantile is None):
        raise ValueError("give exactly one of threshold and quantile")
    if quantile is not None:
        if not 0 < quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        finite = x[np.isfinite(x)]
        if finite.size == 0:
            raise InsufficientDataError("no finite values to take a quantile of", 0)
        threshold = float(np.quantile(finite, quantile))
    idx = np.nonzero(x > threshold)[0]
    return ExceedanceRecord(float(threshold), x[idx], idx, x.size, quantile)


@dataclass
class LocalDimSample:
    """Finite-resolution local dimensions at a set of centres."""

    centers: np.ndarray
    d1r: np.ndarray
    r_cut: np.ndarray
    n_exceedances: np.ndarray
    p: Optional[float] = None
    n_dropped: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.d1r.size)

    @property
    def r_eff(self) -> float:
        return float(np.mean(self.r_cut))

    def to_csv(self, path, comment=None):
        d = self.centers.shape[1]
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"z{k}" for k in range(d)] + ["d1r", "r_cut", "n_exceedances"])
            for i in range(self.d1r.size):
                w.writerow([repr(float(v)) for v in self.centers[i]]
                           + [repr(float(self.d1r[i])), repr(float(self.r_cut[i])),
                              int(self.n_exceedances[i])])


@njit(cache=True, parallel=True)
def _pot_kernel(points, centers, center_idx, window, mcode, ps, out_d, out_u, out_n):
    """POT local dimension of every centre for every quantile in ``ps``.

    phi = -log d is decreasing in d, so the order statistics of phi are
    those of d reversed and logs are only needed above the threshold.
    """
    n = points.shape[0]
    for c in prange(centers.shape[0]):
        dist = np.empty(n)
        m = 0
        ci = center_idx[c]
        for j in range(n):
            if ci >= 0 and abs(j - ci) <= window:
                continue
            d = _distance(points[j], centers[c], mcode)
            if d > 0.0:
                dist[m] = d
                m += 1
        if m < 2:
            continue
        for t in range(ps.shape[0]):
            # linear-interpolated p-quantile of phi from its two bracketing order statistics
            h = (m - 1) * ps[t]
            lo = int(math.floor(h))
            kd = m - 1 - lo
            part = np.partition(dist[:m], kd)
            phi_lo = -math.log(part[kd])
            if kd > 0:
                phi_hi = -math.log(part[:kd].max())
                u = phi_lo + (h - lo) * (phi_hi - phi_lo)
            else:
                u = phi_lo
            tot = 0.0
            k = 0
            for j in range(kd):
                v = -math.log(part[j])
                if v > u:
                    tot += v - u
                    k += 1
            out_u[c, t] = u
            out_n[c, t] = k
            out_d[c, t] = k / tot if tot > 0 else math.inf


def _pot_all(traj, ps, centers=None, center_indices=None, window=0):
    pts = np.ascontiguousarray(traj.states)
    if center_indices is not None:
        cidx = np.asarray(center_indices, dtype=np.int64)
        cen = np.ascontiguousarray(pts[cidx])
    else:
        cen = np.ascontiguousarray(np.atleast_2d(np.asarray(centers, dtype=float)))
        if cen.shape[1] != pts.shape[1]:
            cen = cen.reshape(-1, pts.shape[1])
        cidx = np.full(cen.shape[0], -1, dtype=np.int64)
    ps = np.atleast_1d(np.asarray(ps, dtype=float))
    nc = cen.shape[0]
    d = np.full((nc, ps.size), np.nan)
    u = np.full((nc, ps.size), np.nan)
    k = np.zeros((nc, ps.size), dtype=np.int64)
    _pot_kernel(pts, cen, cidx, int(window), METRIC_CODES[traj.metric], ps, d, u, k)
    return cen, d, u, k


def local_dimension_samples(traj: Trajectory, p_list, centers=None, center_indices=None,
                            window: int = 0, min_exceedances: int = MIN_EXCEEDANCES) -> list:
    """:func:`local_dimensions` for several quantiles sharing one distance pass."""
    for p in np.atleast_1d(p_list):
        if not 0 < p < 1:
            raise ValueError("quantile p must lie in (0, 1)")
    if window < 0:
        raise ValueError("window must be non-negative")
    cen, d, u, k = _pot_all(traj, p_list, centers, center_indices, window)
    out = []
    for t, p in enumerate(np.atleast_1d(p_list)):
        keep = (k[:, t] >= min_exceedances) & np.isfinite(d[:, t])
        out.append(LocalDimSample(cen[keep], d[keep, t], np.exp(-u[keep, t]), k[keep, t], float(p),
                                  int(keep.size - np.count_nonzero(keep)),
                                  {"N": len(traj), "window": window,
                                   "min_exceedances": min_exceedances}))
    return out


def local_dimensions(traj: Trajectory, p: float, centers=None, center_indices=None,
                     window: int = 0, min_exceedances: int = MIN_EXCEEDANCES) -> LocalDimSample:
    """Peaks-over-threshold local dimensions ``1/mean(phi_z - u | phi_z > u)``
    with ``u`` the ``p``-quantile of ``phi_z`` along ``traj``.

    Centres are either explicit points (``centers``) or orbit indices
    (``center_indices``); for the latter the indices within ``window`` of the
    centre, itself included, are left out.  Points coinciding with a centre
    give ``phi = inf`` and are excluded.  Centres with fewer than
    ``min_exceedances`` exceedances are dropped and counted.
    """
    return local_dimension_samples(traj, [p], centers, center_indices, window, min_exceedances)[0]


def local_dimension_pot(traj: Trajectory, z, p: float, min_exceedances: int = MIN_EXCEEDANCES,
                        index: Optional[int] = None, window: int = 0):
    """Single-centre POT estimate; returns ``(D_1r, r_cut, n_exceedances)``."""
    if index is not None:
        s = local_dimensions(traj, p, center_indices=[index], window=window, min_exceedances=0)
    else:
        s = local_dimensions(traj, p, centers=np.atleast_2d(z), min_exceedances=0)
    n = int(s.n_exceedances[0]) if len(s) else 0
    if n < min_exceedances:
        raise InsufficientDataError(
            f"only {n} exceedances above the {p} quantile (need {min_exceedances})", n)
    return float(s.d1r[0]), float(s.r_cut[0]), n


def pot_dimension(excess) -> float:
    """Inverse-mean estimate for exponential excesses over the threshold."""
    e = np.asarray(excess, dtype=float)
    if e.size == 0:
        raise InsufficientDataError("no exceedances", 0)
    return float(1.0 / e.mean())


def dq_from_local_dims(sample: LocalDimSample, q: float) -> float:
    """Power-mean spectrum at the shared resolution ``r_eff = mean(r_cut)``:
    ``log((1/N) sum r_eff**((q-1) d_j)) / ((q-1) log r_eff)``.

    ``q = 1`` gives the mean local dimension, ``q = +inf``/``-inf`` the
    minimum/maximum.
    """
    d = np.asarray(sample.d1r, dtype=float)
    if d.size == 0:
        raise InsufficientDataError("empty local-dimension sample", 0)
    if q == 1:
        return float(d.mean())
    if q == math.inf:
        return float(d.min())
    if q == -math.inf:
        return float(d.max())
    lr = math.log(sample.r_eff)
    if lr == 0.0:
        raise ValueError("r_eff must differ from 1")
    a = (q - 1.0) * lr
    log_gamma = logsumexp(a * d) - math.log(d.size)
    return float(log_gamma / a)


# ---------------------------------------------------------------------------
# block maxima and GEV


def block_maxima(series, n: int) -> np.ndarray:
    """Maxima of consecutive non-overlapping blocks of length ``n`` (a
    trailing partial block is discarded)."""
    x = np.asarray(series, dtype=float)
    if n < 1:
        raise ValueError("block length must be positive")
    m = x.size // n
    if m < MIN_BLOCKS:
        raise InsufficientDataError(f"{m} blocks of length {n}; need at least {MIN_BLOCKS}", m)
    return x[: m * n].reshape(m, n).max(axis=1)


def sample_block_maxima(system: SystemSpec, q_list, length: int, n: int, seed: int,
                        chunk: int = 1 << 20) -> dict:
    """Block maxima of the fold-``q`` product observable for every ``q`` in
    ``q_list`` from one pass over ``q_max`` independent copies."""
    q_list = [int(q) for q in q_list]
    q_max = max(q_list)
    chunk = max(n, chunk - chunk % n)
    maxima = {q: [] for q in q_list}
    sampler = ProductSampler(system, q_max, seed)
    usable = length - length % n
    for block in sampler.chunks(usable, chunk):
        m = block.shape[1] // n
        for q in q_list:
            maxima[q].append(block[q - 2, : m * n].reshape(m, n).max(axis=1))
    out = {q: np.concatenate(v) for q, v in maxima.items()}
    if len(out[q_list[0]]) < MIN_BLOCKS:
        raise InsufficientDataError(f"need at least {MIN_BLOCKS} blocks", len(out[q_list[0]]))
    return out


@dataclass
class GevFitResult:
    mu: float
    sigma: float
    xi: float
    loglik: float
    n_blocks: int
    converged: bool = True
    grad_norm: float = 0.0
    message: str = ""


def _gev_terms(theta, x):
    """Per-observation ``A = log(t)/xi`` and ``dA/dxi`` with ``t = 1 + xi*y``."""
    mu, sigma, xi = theta
    y = (x - mu) / sigma
    t = 1.0 + xi * y
    if np.any(t <= 0):
        return None
    xy = xi * y
    small = np.abs(xy) < 1e-3
    if xi == 0.0:
        A = y.copy()
    else:
        A = np.log1p(xy) / xi
    dA = np.empty_like(y)
    ys = y[small]
    xs = xy[small]
    dA[small] = ys * ys * (-0.5 + xs * (2.0 / 3.0 + xs * (-0.75 + xs * 0.8)))
    big = ~small
    dA[big] = (y[big] / t[big] - A[big]) / xi
    return y, t, A, dA


def gev_loglik(theta, x) -> float:
    """GEV log-likelihood with ``G(x) = exp(-(1 + xi (x-mu)/sigma)**(-1/xi))``."""
    mu, sigma, xi = theta
    if sigma <= 0:
        return -math.inf
    terms = _gev_terms(theta, np.asarray(x, dtype=float))
    if terms is None:
        return -math.inf
    _, _, A, _ = terms
    return float(np.sum(-math.log(sigma) - (1.0 + xi) * A - np.exp(-A)))


def gev_gradient(theta, x) -> np.ndarray:
    """Analytic gradient of :func:`gev_loglik` in ``(mu, sigma, xi)``."""
    mu, sigma, xi = theta
    terms = _gev_terms(theta, np.asarray(x, dtype=float))
    if terms is None or sigma <= 0:
        return np.full(3, np.nan)
    y, t, A, dA = terms
    w = (1.0 + xi) - np.exp(-A)
    g_mu = np.sum(w / (sigma * t))
    g_sigma = np.sum(-1.0 / sigma + w * y / (sigma * t))
    g_xi = np.sum(-A - w * dA)
    return np.array([g_mu, g_sigma, g_xi])


def _hessian(theta, x, h=1e-6):
    H = np.empty((3, 3))
    for k in range(3):
        step = h * max(1.0, abs(theta[k]))
        e = np.zeros(3)
        e[k] = step
        H[:, k] = (gev_gradient(theta + e, x) - gev_gradient(theta - e, x)) / (2 * step)
    return 0.5 * (H + H.T)


def fit_gev(maxima, xi_bound: float = 0.5, tol: float = 1e-6) -> GevFitResult:
    """Maximum-likelihood GEV fit with ``|xi| <= xi_bound``.

    Starts from the Gumbel moment estimates, runs L-BFGS-B on
    ``(mu, log sigma, xi)`` and finishes with Newton steps on the analytic
    gradient until its norm is below ``tol``.
    """
    x = np.asarray(maxima, dtype=float)
    if x.size < MIN_BLOCKS:
        raise InsufficientDataError(f"{x.size} maxima; need at least {MIN_BLOCKS}", x.size)
    if not np.all(np.isfinite(x)):
        raise FitError("maxima contain non-finite values")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise FitError("degenerate maxima: zero spread")
    scale0 = math.sqrt(6.0) * sd / math.pi
    start = np.array([x.mean() - EULER_GAMMA * scale0, math.log(scale0), 0.0])
    n = x.size

    def objective(p):
        th = np.array([p[0], math.exp(p[1]), p[2]])
        ll = gev_loglik(th, x)
        if not np.isfinite(ll):
            return 1e300, np.zeros(3)
        g = gev_gradient(th, x)
        # chain rule for log sigma; scaled by n for conditioning
        return -ll / n, -np.array([g[0], g[1] * th[1], g[2]]) / n

    res = minimize(objective, start, jac=True, method="L-BFGS-B",
                   bounds=[(None, None), (None, None), (-xi_bound, xi_bound)],
                   options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-12})
    theta = np.array([res.x[0], math.exp(res.x[1]), res.x[2]])
    g = gev_gradient(theta, x)
    on_bound = abs(theta[2]) >= xi_bound - 1e-9
    for _ in range(50):
        if on_bound or np.linalg.norm(g) < tol * 1e-2:
            break
        H = _hessian(theta, x)
        try:
            delta = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        ll0 = gev_loglik(theta, x)
        lam = 1.0
        while lam > 1e-8:
            cand = theta + lam * delta
            if cand[1] > 0 and abs(cand[2]) <= xi_bound and gev_loglik(cand, x) >= ll0 - 1e-12 * abs(ll0):
                break
            lam *= 0.5
        else:
            break
        theta = cand
        g = gev_gradient(theta, x)
    gn = float(np.linalg.norm(g if not on_bound else g[:2]))
    ok = bool(np.isfinite(gn) and gn < tol)
    if not ok:
        raise FitError(f"GEV fit did not converge: |grad| = {gn:.3g}, optimizer said "
                       f"{res.message!r}, estimate mu={theta[0]:.6g} sigma={theta[1]:.6g} xi={theta[2]:.6g}")
    return GevFitResult(float(theta[0]), float(theta[1]), float(theta[2]),
                        gev_loglik(theta, x), n, ok, gn, str(res.message))


def gev_stderr(fit: GevFitResult, maxima) -> np.ndarray:
    """Standard errors of ``(mu, sigma, xi)`` from the observed information."""
    theta = np.array([fit.mu, fit.sigma, fit.xi])
    H = _hessian(theta, np.asarray(maxima, dtype=float))
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return np.full(3, np.nan)
    d = np.diag(cov)
    return np.where(d > 0, np.sqrt(np.abs(d)), np.nan)


def dq_from_gev(fit: GevFitResult, q: float, n: int):
    """``D_q = 1/(sigma (q-1))`` from the scale, plus the location cross-check
    ``log(n)/(mu (q-1))``."""
    if q == 1:
        raise ValueError("the block-maxima scaling is degenerate at q=1")
    if not fit.sigma > 0:
        raise ValueError("GEV scale must be positive")
    cross = math.log(n) / (fit.mu * (q - 1)) if fit.mu != 0 else math.nan
    return 1.0 / (fit.sigma * (q - 1)), cross


def write_gev_csv(path, rows, comment=None):
    """``rows``: iterable of ``(q, n, GevFitResult)``."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "n", "mu", "sigma", "xi", "dq", "dq_cross", "loglik"])
        for q, n, fit in rows:
            dq, cross = dq_from_gev(fit, q, n)
            w.writerow([q, n, repr(fit.mu), repr(fit.sigma), repr(fit.xi), repr(dq),
                        repr(cross), repr(fit.loglik)])


# ---------------------------------------------------------------------------
# fixed-resolution local dimensions


def fixed_radius_local_dims(centers: Trajectory, samples: Trajectory, radii) -> list:
    """``D_{1,r}(z) = log mu(B(z, r)) / log r`` for every centre and radius.

    Returns one :class:`LocalDimSample` per radius (``r_cut = r``); centres
    whose ball is empty are dropped and counted in ``n_dropped``.
    """
    from .recurrence import ball_counts

    radii = np.asarray(radii, dtype=float)
    counts = ball_counts(centers, samples, radii)
    out = []
    for k, r in enumerate(radii):
        c = counts[:, k]
        pos = c > 0
        d = np.log(c[pos] / float(len(samples))) / math.log(r)
        out.append(LocalDimSample(centers.states[pos], d, np.full(d.size, r), c[pos], None,
                                  int(np.count_nonzero(~pos)), {"N": len(samples), "r": float(r)}))
    return out
