"""Scaling exponents tau(q) and dimensions D_q from log-integral tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FitError
from .recurrence import ScalingTable, ball_counts, _radii

METHODS = ("GammaFit", "UpsilonFit", "ReturnFit", "ExceedanceFit", "GevFit", "LocalDimFormula")
_METHOD_OF_KIND = {"Gamma": "GammaFit", "Upsilon": "UpsilonFit", "GammaReturn": "ReturnFit"}


@dataclass
class DimensionSpectrum:
    q: np.ndarray
    tau: np.ndarray
    dq: np.ndarray
    stderr: np.ndarray
    method: str
    fit_range: tuple = (math.nan, math.nan)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        for name in ("q", "tau", "dq", "stderr"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def monotonicity_violations(self) -> list:
        """Pairs of adjacent q where D_q rises by more than twice the combined stderr."""
        order = np.argsort(self.q)
        q, d, s = self.q[order], self.dq[order], self.stderr[order]
        bad = []
        for i in range(len(q) - 1):
            if np.isfinite(d[i]) and np.isfinite(d[i + 1]):
                if d[i + 1] - d[i] > 2 * math.hypot(s[i], s[i + 1]) + 1e-9:
                    bad.append((q[i], q[i + 1]))
        return bad

    def to_csv(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q", "tau", "dq", "stderr", "method", "r_lo", "r_hi"])
            for i in range(self.q.size):
                w.writerow([repr(float(self.q[i])), repr(float(self.tau[i])), repr(float(self.dq[i])),
                            repr(float(self.stderr[i])), self.method,
                            repr(float(self.fit_range[0])), repr(float(self.fit_range[1]))])

    @classmethod
    def from_csv(cls, path) -> "DimensionSpectrum":
        with open(path) as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        if not rows:
            raise ValueError(f"{path}: no spectrum rows")
        col = lambda k: np.array([float(r[k]) for r in rows])
        return cls(col("q"), col("tau"), col("dq"), col("stderr"), rows[0]["method"],
                   (float(rows[0]["r_lo"]), float(rows[0]["r_hi"])))


@dataclass(frozen=True)
class Extrapolation:
    dq: float
    B: float
    stderr: float
    model: str


def ols(x, y):
    """Ordinary least squares ``y = a + b x``; returns (a, b, se_a, se_b)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2:
        raise FitError(f"need at least two points for a line, got {n}")
    xm = x.mean()
    sxx = np.sum((x - xm) ** 2)
    if not sxx > 1e-300 * max(1.0, xm * xm):
        raise FitError("singular design: all abscissae are equal")
    b = np.sum((x - xm) * (y - y.mean())) / sxx
    a = y.mean() - b * xm
    if n > 2:
        s2 = np.sum((y - a - b * x) ** 2) / (n - 2)
        se_b = math.sqrt(s2 / sxx)
        se_a = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    else:
        se_a = se_b = 0.0
    return float(a), float(b), se_a, se_b


def local_slopes(table: ScalingTable, q: float):
    """Secant slopes of ``log_value`` vs ``log r`` between consecutive radii,
    divided by ``q - 1``.  Returns ``(r_mid, sigma)`` with ``r_mid`` the
    geometric midpoint of each radius pair; pairs touching a flagged cell
    are skipped."""
    if q == 1:
        raise ValueError("local slopes are undefined at q=1; use information_dimension")
    if table.radii.size < 2:
        raise ValueError("need at least two radii")
    i = table.row(q)
    lr = table.log_r
    lv = table.log_values[i]
    ok = ~table.flagged[i]
    sel = ok[:-1] & ok[1:]
    sigma = np.diff(lv) / np.diff(lr) / (q - 1.0)
    r_mid = np.exp(0.5 * (lr[1:] + lr[:-1]))
    return r_mid[sel], sigma[sel]


def extrapolate_dimension(slopes, model: str = "inverse-log") -> Extrapolation:
    """Fit ``sigma(r) = D + B * g(r)`` and return the intercept ``D``.

    ``model="inverse-log"`` uses ``g = 1/log r`` (the leading correction for
    an integral that behaves like ``m log(1/m)``, ``m ~ r**D``);
    ``model="log"`` uses ``g = log r``.
    """
    r, sigma = (np.asarray(a, dtype=float) for a in slopes)
    if r.size < 3:
        raise FitError(f"extrapolation needs at least three slopes, got {r.size}")
    if model == "inverse-log":
        g = 1.0 / np.log(r)
    elif model == "log":
        g = np.log(r)
    else:
        raise ValueError(f"unknown extrapolation model {model!r}")
    a, b, se_a, _ = ols(g, sigma)
    return Extrapolation(a, b, se_a, model)


def _range_mask(radii, fit_range):
    if fit_range is None:
        return np.ones(radii.size, dtype=bool)
    lo, hi = fit_range
    return (radii >= lo * (1 - 1e-12)) & (radii <= hi * (1 + 1e-12))


def fit_tau(table: ScalingTable, q: float, fit_range: Optional[tuple] = None):
    """Least-squares slope of ``log_value`` vs ``log r`` over unflagged radii in
    ``fit_range``; returns ``(tau, stderr)``.

    For hitting tables the slope of ``log Upsilon(q, r)`` is ``-R(1-q)``,
    which equals ``tau(q)`` for ``q < 2``, so no remapping is needed.
    """
    if q == 1 and table.kind in ("Gamma", "Upsilon"):
        return 0.0, 0.0
    i = table.row(q)
    use = _range_mask(table.radii, fit_range) & ~table.flagged[i]
    if np.count_nonzero(use) < 3:
        raise FitError(f"q={q}: fewer than three usable radii in the fit range")
    _, b, _, se_b = ols(table.log_r[use], table.log_values[i, use])
    return b, se_b


def spectrum_from_table(table: ScalingTable, q_list=None, fit_range=None,
                        d1: Optional[float] = None) -> DimensionSpectrum:
    """Fit every requested ``q``; ``D_1`` (undefined from the slope) is taken
    from ``d1`` when given, else reported as NaN."""
    q_list = table.q if q_list is None else np.atleast_1d(np.asarray(q_list, dtype=float))
    tau, dq, se = [], [], []
    for q in q_list:
        t, s = fit_tau(table, q, fit_range)
        tau.append(t)
        if q == 1:
            dq.append(math.nan if d1 is None else d1)
            se.append(s)
        else:
            dq.append(t / (q - 1))
            se.append(s / abs(q - 1))
    radii = table.radii[_range_mask(table.radii, fit_range)]
    fr = (float(radii.min()), float(radii.max())) if radii.size else (math.nan, math.nan)
    return DimensionSpectrum(q_list, tau, dq, se, _METHOD_OF_KIND[table.kind], fr)


def information_dimension(source, samples=None, grid=None, fit_range=None, index=None):
    """Information dimension ``D_1``.

    ``information_dimension(targets, samples, grid)`` fits the average of
    ``log mu(B(z, r))`` over targets against ``log r``; targets with empty
    balls are dropped.  Returns ``(D1, stderr, n_dropped)``.

    ``information_dimension(local_dim_sample)`` returns the mean of the
    local dimensions with its standard error.
    """
    if samples is None:
        d = np.asarray(source.d1r, dtype=float)
        if d.size == 0:
            raise ValueError("empty local-dimension sample")
        se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
        return float(d.mean()), se, 0
    radii = _radii(grid)
    counts = ball_counts(source, samples, radii, index)
    pos = np.all(counts > 0, axis=1)
    if not pos.any():
        raise FitError("every target ball is empty at some radius")
    mean_log = np.log(counts[pos] / float(len(samples))).mean(axis=0)
    use = _range_mask(radii, fit_range)
    if np.count_nonzero(use) < 2:
        raise FitError("fewer than two radii in the fit range")
    _, b, _, se_b = ols(np.log(radii[use]), mean_log[use])
    return b, se_b, int(np.count_nonzero(~pos))
