"""Dynamical extremal index theta_q of q-fold products of a map.

Empirical values come from the Süveges maximum-likelihood estimator on the
exceedances of the product observable; for one-dimensional maps with a known
density the index also follows from
``theta_q = 1 - int h**q |DT|**(1-q) / int h**q``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .dynsys import SystemKind, SystemSpec, density_model
from .errors import InsufficientDataError, UnsupportedSystemError
from .evt import ExceedanceRecord, ProductSampler, replica_stream0

METHODS = ("Suveges", "AnalyticClosedForm", "AnalyticQuadrature", "EntropyScaling")
ANALYTIC_KINDS = (SystemKind.THREE_X, SystemKind.MARKOV_PL, SystemKind.GAUSS, SystemKind.HEMMER)
PRE_RUN = 10 ** 6
# generator streams for the threshold pre-run; far above any replica's streams
PRE_RUN_STREAM0 = 1 << 20


@dataclass
class DeiEstimate:
    q: int
    theta: float
    method: str
    stderr: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def h_q(self) -> Optional[float]:
        return h_q(self.theta, self.q) if self.theta < 1 else None


def h_q(theta: float, q: int) -> float:
    """``log(1 - theta) / (q - 1)``."""
    if q < 2:
        raise ValueError("H_q needs q >= 2")
    if not 0 <= theta <= 1:
        raise ValueError("theta must lie in [0, 1]")
    if theta == 1:
        raise ValueError("H_q is undefined at theta = 1")
    return math.log1p(-theta) / (q - 1)


def entropy_scaling_theta(q: int, h_m: float) -> float:
    """``1 - exp(-(q-1) h_m)``: the index when density and derivative are constant."""
    if h_m < 0:
        raise ValueError("entropy must be non-negative")
    return -math.expm1(-(q - 1) * h_m)


def suveges_theta(record: ExceedanceRecord):
    """Süveges estimator from inter-exceedance gaps; returns ``(theta, diagnostics)``."""
    n = record.count
    if n < 2:
        raise InsufficientDataError(f"{n} exceedances; the estimator needs at least 2", n)
    p_exc = n / float(record.series_len)
    s = np.diff(np.asarray(record.indices, dtype=np.int64)) - 1
    a = p_exc * float(s.sum())
    n_c = int(np.count_nonzero(s > 0))
    b = (n - 1) + n_c
    if a < 1e-12:
        theta = 2.0 * n_c / b
    else:
        disc = max((a + b) ** 2 - 8.0 * n_c * a, 0.0)
        theta = (a + b - math.sqrt(disc)) / (2.0 * a)
    theta = min(max(theta, 0.0), 1.0)
    return theta, {"n": n, "n_c": n_c, "p_exc": p_exc, "sum_ps": a}


# ---------------------------------------------------------------------------
# empirical


def theta_spectrum(system: SystemSpec, q_list, length: int, quantile: float = 0.997,
                   replicas: int = 20, seed: int = 0, pre_run: int = PRE_RUN,
                   chunk: int = 1 << 20) -> list:
    """Süveges ``theta_q`` for every ``q`` in ``q_list``, averaged over
    independent replicas; ``stderr`` is the spread (standard deviation)
    across replicas.  All folds of a replica share one product orbit."""
    q_list = sorted({int(q) for q in q_list})
    if q_list[0] < 2:
        raise ValueError("theta_q needs integer q >= 2")
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    if replicas < 1:
        raise ValueError("need at least one replica")
    q_max = q_list[-1]
    pre = np.concatenate([b for b in ProductSampler(system, q_max, seed, PRE_RUN_STREAM0)
                          .chunks(pre_run)], axis=1)
    thresholds = {}
    for q in q_list:
        v = pre[q - 2]
        thresholds[q] = float(np.quantile(v[np.isfinite(v)], quantile))
    thetas = {q: [] for q in q_list}
    for rep in range(replicas):
        idx = {q: [] for q in q_list}
        offset = 0
        sampler = ProductSampler(system, q_max, seed, replica_stream0(rep, q_max))
        for block in sampler.chunks(length, chunk):
            for q in q_list:
                idx[q].append(np.nonzero(block[q - 2] > thresholds[q])[0] + offset)
            offset += block.shape[1]
        for q in q_list:
            ind = np.concatenate(idx[q])
            # only the exceedance times matter to the estimator
            rec = ExceedanceRecord(thresholds[q], np.zeros(ind.size), ind, length, quantile)
            thetas[q].append(suveges_theta(rec)[0])
    out = []
    for q in q_list:
        t = np.asarray(thetas[q])
        out.append(DeiEstimate(q, float(t.mean()), "Suveges",
                               float(t.std(ddof=1)) if t.size > 1 else None,
                               {"quantile": quantile, "len": length, "replicas": replicas,
                                "threshold": thresholds[q], "replica_thetas": t.tolist()}))
    return out


def theta_q_empirical(system: SystemSpec, q: int, length: int, quantile: float = 0.997,
                      replicas: int = 20, seed: int = 0, pre_run: int = PRE_RUN) -> DeiEstimate:
    return theta_spectrum(system, [q], length, quantile, replicas, seed, pre_run)[0]


# ---------------------------------------------------------------------------
# analytic


def _kind(kind) -> SystemKind:
    if isinstance(kind, SystemSpec):
        return kind.kind
    return SystemKind(kind)


def _check_q(q):
    if int(q) != q or q < 2:
        raise ValueError("analytic theta_q needs integer q >= 2")
    return int(q)


def _markov_theta(q):
    num = den = Fraction(0)
    for h, d in ((Fraction(3, 5), 3), (Fraction(6, 5), 2), (Fraction(6, 5), 3)):
        num += h ** q / Fraction(d) ** (q - 1)
        den += h ** q
    return 1 - num / den


def _gauss_theta(q):
    m = 2 * (q - 1)
    rational = Fraction(0)
    for k in range(m + 1):
        if k == q - 1:
            continue
        e = k - q + 1
        rational += (-1) ** k * math.comb(m, k) * (Fraction(2) ** e - 1) / e
    num = float(rational) + (-1) ** (q - 1) * math.comb(m, q - 1) * math.log(2.0)
    den = float((Fraction(2) ** (1 - q) - 1) / (1 - q))
    return 1.0 - num / den


def _hemmer_sum(q, sign_shift):
    s = Fraction(0)
    for k in range(q + 1):
        s += math.comb(q, k) * Fraction(1 + (-1) ** (k + sign_shift), 2 * k + q + 1)
    return 1 - Fraction(q + 1, 2 ** q) * s


def hemmer_theta_printed(q: int) -> float:
    """The Hemmer sum with parity factor ``(-1)**(k+q-1)``; differs from the
    integral for even ``q`` and is kept for comparison only."""
    q = _check_q(q)
    return float(_hemmer_sum(q, q - 1))


def theta_closed_form(kind, q: int) -> float:
    q = _check_q(q)
    kind = _kind(kind)
    if kind is SystemKind.THREE_X:
        return float(1 - Fraction(1, 3 ** (q - 1)))
    if kind is SystemKind.MARKOV_PL:
        return float(_markov_theta(q))
    if kind is SystemKind.GAUSS:
        return _gauss_theta(q)
    if kind is SystemKind.HEMMER:
        return float(_hemmer_sum(q, 0))
    raise UnsupportedSystemError(f"no closed-form extremal index for {kind.value}")


def theta_quadrature(kind, q: int) -> float:
    """``1 - int h**q |DT|**(1-q) / int h**q`` by adaptive Gauss-Kronrod quadrature."""
    q = _check_q(q)
    kind = _kind(kind)
    if kind not in ANALYTIC_KINDS:
        raise UnsupportedSystemError(f"no closed-form density for {kind.value}")
    model = density_model(kind)
    a, b = model.support
    pts = list(model.breakpoints) or None
    opts = dict(points=pts, epsabs=1e-14, epsrel=1e-13, limit=500)
    if kind is SystemKind.HEMMER:
        # |DT|**(1-q) = |x|**((q-1)/2), written out to avoid 0 * inf at x = 0
        num = quad(lambda x: model.density(x) ** q * abs(x) ** ((q - 1) / 2.0), a, b, **opts)[0]
    else:
        num = quad(lambda x: model.density(x) ** q * model.derivative(x) ** (1 - q), a, b, **opts)[0]
    den = quad(lambda x: model.density(x) ** q, a, b, **opts)[0]
    return 1.0 - num / den


def theta_q_analytic(kind, q: int, method: str = "AnalyticClosedForm") -> DeiEstimate:
    """Closed-form or quadrature ``theta_q`` for the maps with a known density."""
    if method == "AnalyticClosedForm":
        theta = theta_closed_form(kind, q)
    elif method == "AnalyticQuadrature":
        theta = theta_quadrature(kind, q)
    else:
        raise ValueError(f"unknown analytic method {method!r}")
    return DeiEstimate(int(q), theta, method, None, {"kind": _kind(kind).value})


def write_dei_csv(path, estimates, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "theta", "theta_stderr", "h_q", "method", "quantile", "len", "replicas"])
        for e in estimates:
            hq = e.h_q
            w.writerow([e.q, repr(e.theta), "" if e.stderr is None else repr(e.stderr),
                        "" if hq is None else repr(hq), e.method,
                        e.meta.get("quantile", ""), e.meta.get("len", ""),
                        e.meta.get("replicas", "")])
