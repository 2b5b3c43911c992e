"""Free energy R(q) = -tau(1-q), its Legendre-Fenchel transforms, and
empirical large-deviation rates of local dimensions and hitting times."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .dynsys import SystemSpec, Trajectory, generate_trajectory
from .errors import InsufficientDataError
from .recurrence import SpatialHash

KINDS = ("Q", "Qhat", "fAlpha", "EmpiricalLocalDim", "EmpiricalHitting")
Q_GRID = np.round(np.arange(-10.0, 10.0 + 1e-9, 0.01), 10)


def ifs_tau(p) -> Callable:
    """``tau(q) = -log2(sum p_i**q)`` for an IFS of contraction 1/2 with weights ``p``."""
    p = np.asarray(p, dtype=float)
    logp = np.log(p)

    def tau(q):
        q = np.asarray(q, dtype=float)
        z = np.logaddexp.reduce(np.multiply.outer(q, logp), axis=-1)
        return -z / math.log(2.0)
    return tau


def sierpinski_tau(p=(0.25, 0.25, 0.5)) -> Callable:
    return ifs_tau(p)


def uniform_tau(dim: float) -> Callable:
    """``tau(q) = dim (q - 1)``: a measure with all dimensions equal to ``dim``."""
    return lambda q: dim * (np.asarray(q, dtype=float) - 1.0)


def tau_from_spectrum(spectrum) -> Callable:
    """Shape-preserving cubic interpolant of a fitted ``tau(q)``; raises
    outside the fitted q-range."""
    order = np.argsort(spectrum.q)
    q = spectrum.q[order]
    t = spectrum.tau[order]
    ok = np.isfinite(t)
    interp = PchipInterpolator(q[ok], t[ok], extrapolate=False)
    lo, hi = q[ok].min(), q[ok].max()

    def tau(x):
        x = np.asarray(x, dtype=float)
        if np.any((x < lo - 1e-12) | (x > hi + 1e-12)):
            raise ValueError(f"q outside the interpolable range [{lo}, {hi}]")
        return interp(np.clip(x, lo, hi))
    tau.q_range = (float(lo), float(hi))
    return tau


@dataclass
class FreeEnergy:
    q: np.ndarray
    R: np.ndarray
    tau: Callable
    analytic: bool = True

    @property
    def convex(self) -> bool:
        tol = 1e-6 if self.analytic else 1e-2
        return bool(np.all(np.diff(self.R, 2) >= -tol))

    def __call__(self, q):
        return -self.tau(1.0 - np.asarray(q, dtype=float))


def free_energy(tau: Callable, q_grid, analytic: bool = True) -> FreeEnergy:
    """``R(q) = -tau(1 - q)`` on ``q_grid``."""
    q = np.asarray(q_grid, dtype=float)
    return FreeEnergy(q, -np.asarray(tau(1.0 - q), dtype=float), tau, analytic)


@dataclass
class RateCurve:
    s: np.ndarray
    values: np.ndarray
    kind: str
    r_level: Optional[float] = None
    censored: np.ndarray = None
    flagged: np.ndarray = None
    n_samples: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown rate-curve kind {self.kind!r}")
        self.s = np.asarray(self.s, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.censored is None:
            self.censored = np.zeros(self.s.size, dtype=bool)
        if self.flagged is None:
            self.flagged = np.zeros(self.s.size, dtype=bool)

    def to_csv(self, path, comment=None, header=True, mode="w"):
        with open(path, mode, newline="") as fh:
            if comment and header:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            if header:
                w.writerow(["s", "value", "kind", "r_level", "censored", "n_samples", "flagged"])
            r = "" if self.r_level is None else repr(float(self.r_level))
            for i in range(self.s.size):
                w.writerow([repr(float(self.s[i])), repr(float(self.values[i])), self.kind, r,
                            int(self.censored[i]), self.n_samples, int(self.flagged[i])])


# ---------------------------------------------------------------------------
# Legendre-Fenchel transforms


def _objective(kind, tau, s):
    """Function of q whose supremum defines the transform at ``s`` (for
    ``fAlpha`` the supremum of the negated objective)."""
    if kind == "Q":
        return lambda q: -q * s + tau(q + 1.0)
    if kind == "Qhat":
        return lambda q: q * s + tau(1.0 - q)
    if kind == "fAlpha":
        return lambda q: tau(q) - s * q
    raise ValueError(f"unknown transform {kind!r}")


def legendre_point(kind: str, tau: Callable, s: float, q_grid=Q_GRID):
    """Transform at one ``s``; returns ``(value, argmax_q, edge_flag)``.

    The supremum is located on ``q_grid`` and refined by golden-section
    search on the bracketing grid cells.  It is flagged when an end point of
    the grid beats every interior point, meaning the true supremum lies
    outside (or is infinite).
    """
    g = _objective(kind, tau, s)
    vals = np.asarray(g(q_grid), dtype=float)
    i = int(np.argmax(vals))
    interior = vals[1:-1].max()
    edge = bool(max(vals[0], vals[-1]) > interior + 1e-12)
    best, qbest = vals[i], q_grid[i]
    if not edge and 0 < i < q_grid.size - 1 and vals[i] > max(vals[i - 1], vals[i + 1]):
        res = minimize_scalar(lambda q: -float(g(q)), bracket=(q_grid[i - 1], q_grid[i], q_grid[i + 1]),
                              method="golden", tol=1e-10)
        if -res.fun >= best:
            best, qbest = -res.fun, res.x
    value = -best if kind == "fAlpha" else best
    return float(value), float(qbest), edge


def legendre(kind: str, tau: Callable, s_grid, q_grid=Q_GRID) -> RateCurve:
    """``Q(s) = sup_q{-q s + tau(q+1)}``, ``Qhat(s) = sup_q{q s + tau(1-q)}``
    or ``f(alpha) = min_q{alpha q - tau(q)}`` on ``s_grid``."""
    s = np.asarray(s_grid, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("s values must be finite")
    vals = np.empty(s.size)
    flags = np.zeros(s.size, dtype=bool)
    for k, sk in enumerate(s):
        vals[k], _, flags[k] = legendre_point(kind, tau, sk, q_grid)
    return RateCurve(s, vals, kind, flagged=flags)


def inverse_legendre_q(tau: Callable, q: float, s_range=(0.0, 4.0)) -> float:
    """Recover ``tau(q+1) = inf_s {Q(s) + q s}`` by minimising over ``s``
    with ``Q`` itself evaluated through :func:`legendre_point`."""
    f = lambda s: legendre_point("Q", tau, s)[0] + q * s
    res = minimize_scalar(f, bounds=s_range, method="bounded", options={"xatol": 1e-10})
    return float(res.fun)


def qhat_window(tau: Callable, d1: float):
    """Range ``(0, R(D1+1)/(D1+1))`` of excesses ``s`` over which the hitting
    rate ``Qhat(D1 + s)`` is established."""
    delta = d1 + 1.0
    return 0.0, float(-tau(1.0 - delta)) / delta


# ---------------------------------------------------------------------------
# empirical rates


def _censor_bound(n, r):
    return math.log(n) / abs(math.log(r))


def empirical_rate_local_dim(sample, s_grid, r_level: Optional[float] = None) -> RateCurve:
    """``Q_r(s) = log P(D_1r >= s) / log r`` above the mean local dimension and
    ``log P(D_1r <= s) / log r`` below it.  Centres dropped for an empty ball
    count as ``D_1r = +inf``.  Empty cells become censored lower bounds
    ``log(n) / |log r|``."""
    d = np.asarray(sample.d1r, dtype=float)
    n = d.size + int(getattr(sample, "n_dropped", 0))
    if n == 0:
        raise InsufficientDataError("empty local-dimension sample", 0)
    r = sample.r_eff if r_level is None else r_level
    lr = math.log(r)
    mean = d.mean()
    s = np.asarray(s_grid, dtype=float)
    vals = np.empty(s.size)
    cens = np.zeros(s.size, dtype=bool)
    for k, sk in enumerate(s):
        if sk >= mean:
            c = np.count_nonzero(d >= sk) + (n - d.size)
        else:
            c = np.count_nonzero(d <= sk)
        if c == 0:
            vals[k] = _censor_bound(n, r)
            cens[k] = True
        else:
            vals[k] = math.log(c / n) / lr
    if cens.all():
        raise InsufficientDataError("every cell of the rate curve is censored", n)
    return RateCurve(s, vals, "EmpiricalLocalDim", r, cens, None, n, {"mean_d1r": float(mean)})


def empirical_rate_hitting(system: SystemSpec, r: float, s_grid, d1: float, n_targets: int,
                           sample_length: int, seed: int, H: int = 32,
                           tau: Optional[Callable] = None) -> RateCurve:
    """Upper-tail hitting rate ``log P(log H / -log r > d1 + s) / log r``.

    Targets ``z`` come from one orbit and starting points ``x`` from an
    independent one.  Following the sample orbit until its ``H``-th visit to
    ``B(z, r)`` gives the hitting time of every start point before that
    visit exactly, so each target contributes the exact tail fraction over
    its block of starts.  Targets never hit within ``sample_length`` count
    entirely as exceeding (right-censored); more than 10% of them flags the
    whole curve.  With ``tau`` the curve also carries the Legendre
    ``Qhat(d1 + s)`` and the validity window in ``meta``.
    """
    targets = generate_trajectory(system, seed, n_targets, stream=0)
    samples = generate_trajectory(system, seed, sample_length, stream=1)
    h = SpatialHash(samples.states, r, samples.metric)
    vis, cnt = h.visits(targets.states, r, H)
    s = np.asarray(s_grid, dtype=float)
    T = np.power(r, -(d1 + s))  # hitting time threshold
    frac = np.zeros((n_targets, s.size))
    hit = cnt > 0
    for l in np.nonzero(hit)[0]:
        v = vis[l, : cnt[l]]
        gaps = np.diff(v, prepend=0).astype(float)
        frac[l] = np.maximum(gaps[:, None] - np.floor(T)[None, :], 0.0).sum(axis=0) / v[-1]
    frac[~hit] = 1.0
    p = frac.mean(axis=0)
    n_pairs = int(vis[hit, :].max(axis=1).sum() if hit.any() else 0) + int(np.count_nonzero(~hit)) * sample_length
    lr = math.log(r)
    vals = np.empty(s.size)
    cens = p <= 0
    vals[~cens] = np.log(p[~cens]) / lr
    vals[cens] = _censor_bound(max(n_pairs, 2), r)
    censored_frac = float(np.count_nonzero(~hit)) / n_targets
    flagged = np.full(s.size, censored_frac > 0.1)
    meta = {"d1": d1, "H": H, "censored_targets": int(np.count_nonzero(~hit)),
            "n_targets": n_targets, "sample_length": sample_length}
    if tau is not None:
        lo, hi = qhat_window(tau, d1)
        meta["window"] = (lo, hi)
        meta["legendre"] = legendre("Qhat", tau, d1 + s).values
        flagged |= (s <= lo) | (s >= hi)
    return RateCurve(s, vals, "EmpiricalHitting", r, cens, flagged, n_targets, meta)


def sup_distance(curve: RateCurve, reference: RateCurve, mask=None) -> float:
    """Largest ``|curve - reference|`` over uncensored, unflagged points."""
    m = ~curve.censored & ~curve.flagged & ~reference.flagged
    if mask is not None:
        m &= mask
    if not m.any():
        return math.nan
    return float(np.max(np.abs(curve.values[m] - reference.values[m])))
