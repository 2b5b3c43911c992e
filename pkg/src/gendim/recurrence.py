"""Ball measures, correlation integrals and hitting/return-time integrals.

Neighbour queries go through :class:`SpatialHash`, a uniform grid hashed
into a power-of-two table.  Inside every bucket the points stay sorted by
their time index, which lets the hitting-time kernels walk the visits to a
ball in chronological order and stop after ``H`` of them.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit, prange

from .dynsys import METRIC_CODES, Metric, Trajectory, _distance, distances_to
from .errors import InsufficientDataError

KINDS = ("Gamma", "Upsilon", "GammaReturn")
_P0, _P1, _P2 = 73856093, 19349663, 83492791


@dataclass(frozen=True)
class RadiusGrid:
    """Radii ``r_k = r_max * ratio**k`` for ``k = 0..count-1`` (decreasing)."""

    r_max: float = 0.1
    ratio: float = 2 ** -0.5
    count: int = 12

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if self.count < 2:
            raise ValueError("a radius grid needs at least two radii")

    @classmethod
    def spanning(cls, r_lo, r_hi, count) -> "RadiusGrid":
        """Log-equispaced grid from ``r_hi`` down to ``r_lo`` inclusive."""
        if not 0 < r_lo < r_hi:
            raise ValueError("need 0 < r_lo < r_hi")
        return cls(r_hi, (r_lo / r_hi) ** (1.0 / (count - 1)), count)

    @property
    def values(self) -> np.ndarray:
        return self.r_max * self.ratio ** np.arange(self.count)


@dataclass
class ScalingTable:
    """Log-integral estimates indexed by ``(q, r)``.

    Cells with ``flagged`` set are unreliable (too many dropped targets or
    zero-measure balls at ``q < 1``) and are skipped by the fitting routines.
    """

    q: np.ndarray
    radii: np.ndarray
    log_values: np.ndarray
    kind: str
    n_dropped: np.ndarray = None
    flagged: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown table kind {self.kind!r}")
        self.q = np.asarray(self.q, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float)
        self.log_values = np.asarray(self.log_values, dtype=float)
        shape = (self.q.size, self.radii.size)
        if self.n_dropped is None:
            self.n_dropped = np.zeros(shape, dtype=np.int64)
        if self.flagged is None:
            self.flagged = np.zeros(shape, dtype=bool)
        self.flagged = np.asarray(self.flagged, dtype=bool) | ~np.isfinite(self.log_values)

    @property
    def log_r(self) -> np.ndarray:
        return np.log(self.radii)

    def row(self, q) -> int:
        hits = np.nonzero(np.isclose(self.q, q, rtol=0, atol=1e-12))[0]
        if hits.size == 0:
            raise KeyError(f"q={q} is not in the table (has {self.q.tolist()})")
        return int(hits[0])

    def to_csv(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q", "r", "log_r", "log_value", "n_dropped", "flagged"])
            for i, q in enumerate(self.q):
                for k, r in enumerate(self.radii):
                    w.writerow([repr(float(q)), repr(float(r)), repr(float(math.log(r))),
                                repr(float(self.log_values[i, k])), int(self.n_dropped[i, k]),
                                int(self.flagged[i, k])])

    @classmethod
    def from_csv(cls, path, kind="Gamma") -> "ScalingTable":
        with open(path) as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        q = sorted({float(r["q"]) for r in rows})
        radii = sorted({float(r["r"]) for r in rows}, reverse=True)
        lv = np.full((len(q), len(radii)), np.nan)
        nd = np.zeros_like(lv, dtype=np.int64)
        fl = np.zeros_like(lv, dtype=bool)
        for r in rows:
            i, k = q.index(float(r["q"])), radii.index(float(r["r"]))
            lv[i, k] = float(r["log_value"])
            nd[i, k] = int(r["n_dropped"])
            fl[i, k] = r["flagged"] == "1"
        return cls(np.array(q), np.array(radii), lv, kind, nd, fl)


@dataclass
class HitRecord:
    z: np.ndarray
    r: float
    hit_times: np.ndarray
    truncated: bool
    scanned: int


# ---------------------------------------------------------------------------
# spatial hash


@njit(cache=True)
def _cell_of(x, origin, side, ncell, out):
    for k in range(x.shape[0]):
        if ncell > 0:
            c = int(math.floor(x[k] * ncell)) % ncell
        else:
            c = int(math.floor((x[k] - origin[k]) / side))
        out[k] = c


@njit(cache=True)
def _hash(cell, mask):
    h = cell[0] * _P0
    if cell.shape[0] > 1:
        h ^= cell[1] * _P1
    if cell.shape[0] > 2:
        h ^= cell[2] * _P2
    return h & mask


@njit(cache=True)
def _bucket_ids(points, origin, side, ncell, mask):
    n, d = points.shape
    out = np.empty(n, dtype=np.int64)
    cell = np.empty(d, dtype=np.int64)
    for i in range(n):
        _cell_of(points[i], origin, side, ncell, cell)
        out[i] = _hash(cell, mask)
    return out


@njit(cache=True)
def _counting_sort(ids, size):
    """Stable bucket order of ``ids`` in ``[0, size)`` and bucket start offsets."""
    starts = np.zeros(size + 1, dtype=np.int64)
    for i in range(ids.shape[0]):
        starts[ids[i] + 1] += 1
    for b in range(size):
        starts[b + 1] += starts[b]
    fill = starts[:-1].copy()
    order = np.empty(ids.shape[0], dtype=np.int64)
    for i in range(ids.shape[0]):
        b = ids[i]
        order[fill[b]] = i
        fill[b] += 1
    return order, starts


@njit(cache=True)
def _neighbour_buckets(z, origin, side, ncell, mask, out):
    """Write the distinct buckets covering the 3**d cells around ``z``; return
    how many were written."""
    d = z.shape[0]
    base = np.empty(d, dtype=np.int64)
    cell = np.empty(d, dtype=np.int64)
    _cell_of(z, origin, side, ncell, base)
    m = 0
    total = 3 ** d
    for code in range(total):
        c = code
        for k in range(d):
            v = base[k] + (c % 3) - 1
            c //= 3
            if ncell > 0:
                v %= ncell
            cell[k] = v
        b = _hash(cell, mask)
        seen = False
        for j in range(m):
            if out[j] == b:
                seen = True
                break
        if not seen:
            out[m] = b
            m += 1
    return m


@njit(cache=True)
def _count_ball(points, order, starts, origin, side, ncell, mask, mcode, z, r, buckets):
    m = _neighbour_buckets(z, origin, side, ncell, mask, buckets)
    cnt = 0
    for j in range(m):
        b = buckets[j]
        for p in range(starts[b], starts[b + 1]):
            if _distance(points[p], z, mcode) < r:
                cnt += 1
    return cnt


@njit(cache=True, parallel=True)
def _count_balls(points, order, starts, origin, side, ncell, mask, mcode, centers, r):
    n = centers.shape[0]
    out = np.zeros(n, dtype=np.int64)
    nb = 3 ** points.shape[1]
    for l in prange(n):
        buckets = np.empty(nb, dtype=np.int64)
        out[l] = _count_ball(points, order, starts, origin, side, ncell, mask, mcode,
                             centers[l], r, buckets)
    return out


@njit(cache=True)
def _lower_bound(order, lo, hi, value):
    while lo < hi:
        mid = (lo + hi) // 2
        if order[mid] < value:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _visits(points, order, starts, origin, side, ncell, mask, mcode, z, r, H, first, out):
    """Chronological k-way merge over the neighbouring buckets; writes the
    first ``H`` indices ``>= first`` whose point lies within ``r`` of ``z``."""
    nb = 3 ** points.shape[1]
    buckets = np.empty(nb, dtype=np.int64)
    m = _neighbour_buckets(z, origin, side, ncell, mask, buckets)
    ptr = np.empty(m, dtype=np.int64)
    end = np.empty(m, dtype=np.int64)
    for j in range(m):
        b = buckets[j]
        ptr[j] = _lower_bound(order, starts[b], starts[b + 1], first)
        end[j] = starts[b + 1]
    found = 0
    while found < H:
        best = -1
        best_idx = 0
        for j in range(m):
            if ptr[j] < end[j]:
                idx = order[ptr[j]]
                if best < 0 or idx < best_idx:
                    best = j
                    best_idx = idx
        if best < 0:
            break
        p = ptr[best]
        ptr[best] += 1
        if _distance(points[p], z, mcode) < r:
            out[found] = best_idx
            found += 1
    return found


@njit(cache=True, parallel=True)
def _visit_table(points, order, starts, origin, side, ncell, mask, mcode, targets, r, H):
    n = targets.shape[0]
    out = np.zeros((n, H), dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    for l in prange(n):
        counts[l] = _visits(points, order, starts, origin, side, ncell, mask, mcode,
                            targets[l], r, H, 1, out[l])
    return out, counts


@njit(cache=True, parallel=True)
def _return_times(points, order, starts, origin, side, ncell, mask, mcode, centers, coords, r):
    n = centers.shape[0]
    out = np.zeros(n, dtype=np.int64)
    nb = 3 ** points.shape[1]
    for c in prange(n):
        i = centers[c]
        z = coords[c]
        buckets = np.empty(nb, dtype=np.int64)
        m = _neighbour_buckets(z, origin, side, ncell, mask, buckets)
        best = -1
        for j in range(m):
            b = buckets[j]
            p = _lower_bound(order, starts[b], starts[b + 1], i + 1)
            while p < starts[b + 1]:
                idx = order[p]
                if best >= 0 and idx >= best:
                    break
                if _distance(points[p], z, mcode) < r:
                    best = idx
                    break
                p += 1
        out[c] = best - i if best >= 0 else 0
    return out


class SpatialHash:
    """Uniform grid of cell side ``>= cell`` over ``points``, hashed into
    ``2**k`` buckets.  For the torus metric the grid wraps around the unit
    cell so that balls crossing the boundary are found."""

    def __init__(self, points, cell: float, metric: Metric):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] > 3:
            raise ValueError("spatial hashing supports at most three coordinates; "
                             "use brute-force distances for higher dimensions")
        self.points = pts
        self.metric = Metric(metric)
        self.mcode = METRIC_CODES[self.metric]
        if self.metric is Metric.TORUS:
            self.ncell = max(1, int(math.floor(1.0 / cell)))
            self.side = 1.0 / self.ncell
        else:
            self.ncell = 0
            self.side = float(cell)
        self.origin = pts.min(axis=0) if len(pts) else np.zeros(pts.shape[1])
        size = 16
        while size < 2 * len(pts):
            size *= 2
        self.mask = size - 1
        ids = _bucket_ids(pts, self.origin, self.side, self.ncell, self.mask)
        self.order, self.starts = _counting_sort(ids, size)
        # bucket-major copy so that scans over a bucket read memory in order
        self.sorted_points = np.ascontiguousarray(pts[self.order])

    def _args(self):
        return (self.sorted_points, self.order, self.starts, self.origin, self.side,
                self.ncell, self.mask, self.mcode)

    def count(self, centers, r) -> np.ndarray:
        c = np.ascontiguousarray(np.atleast_2d(centers), dtype=np.float64)
        return _count_balls(*self._args(), c, float(r))

    def visits(self, targets, r, H):
        t = np.ascontiguousarray(np.atleast_2d(targets), dtype=np.float64)
        return _visit_table(*self._args(), t, float(r), int(H))

    def return_times(self, centers_idx, r):
        idx = np.asarray(centers_idx, dtype=np.int64)
        return _return_times(*self._args(), idx, np.ascontiguousarray(self.points[idx]), float(r))


def _lazy_index(traj: Trajectory, radii):
    # one hash alive at a time; a full index holds a sorted copy per radius
    return (SpatialHash(traj.states, r, traj.metric) for r in radii)


def build_index(traj: Trajectory, radii) -> list:
    """One :class:`SpatialHash` per radius, reusable across estimators."""
    return [SpatialHash(traj.states, r, traj.metric) for r in radii]


def _radii(grid) -> np.ndarray:
    return grid.values if isinstance(grid, RadiusGrid) else np.asarray(grid, dtype=float)


# ---------------------------------------------------------------------------
# estimators


def ball_measure(traj: Trajectory, z, r: float) -> float:
    """Birkhoff estimate ``(1/N) #{j : d(x_j, z) < r}``."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if not r > 0:
        raise ValueError("radius must be positive")
    return float(np.count_nonzero(distances_to(traj.metric, traj.states, z) < r)) / len(traj)


def ball_counts(targets: Trajectory, samples: Trajectory, grid, index=None) -> np.ndarray:
    """Counts of sample points inside ``B(z_l, r_k)``, shape ``(N', n_radii)``."""
    radii = _radii(grid)
    index = _lazy_index(samples, radii) if index is None else index
    return np.stack([h.count(targets.states, r) for h, r in zip(index, radii)], axis=1)


def _q_list(q_list):
    q = np.atleast_1d(np.asarray(q_list, dtype=float))
    if not np.all(np.isfinite(q)):
        raise ValueError("q values must be finite")
    return q


def correlation_integral(targets: Trajectory, samples: Trajectory, grid, q_list,
                         index=None) -> ScalingTable:
    """``log((1/N') sum_l mu_N(B(z_l, r))**(q-1))`` for every ``(q, r)``.

    Targets with an empty ball cannot enter the average when ``q < 1``; they
    are dropped, counted, and the cell is flagged.
    """
    q = _q_list(q_list)
    radii = _radii(grid)
    counts = ball_counts(targets, samples, radii, index)
    mu = counts / float(len(samples))
    lv = np.zeros((q.size, radii.size))
    dropped = np.zeros_like(lv, dtype=np.int64)
    for i, qq in enumerate(q):
        if qq == 1.0:
            continue
        for k in range(radii.size):
            m = mu[:, k]
            if qq < 1.0:
                pos = m > 0
                dropped[i, k] = m.size - np.count_nonzero(pos)
                m = m[pos]
            lv[i, k] = math.log(np.mean(m ** (qq - 1.0))) if m.size else np.nan
    meta = {"N": len(samples), "N_targets": len(targets),
            "seeds": (targets.seed, samples.seed)}
    return ScalingTable(q, radii, lv, "Gamma", dropped, dropped > 0, meta)


def hit_times(samples: Trajectory, z, r: float, H: int) -> HitRecord:
    """Times ``n > 0`` at which the orbit ``x_n`` lies in ``B(z, r)``, up to ``H``."""
    if H < 1:
        raise ValueError("H must be at least 1")
    d = distances_to(samples.metric, samples.states[1:], z)
    times = np.nonzero(d < r)[0][:H] + 1
    truncated = times.size < H
    scanned = int(times[-1]) if not truncated else len(samples) - 1
    return HitRecord(np.atleast_1d(np.asarray(z, dtype=float)), float(r), times, truncated, scanned)


def power_prefix(exponent: float, g_max: int) -> np.ndarray:
    """``P[g] = sum_{m=1..g} m**exponent`` with ``P[0] = 0``."""
    out = np.zeros(g_max + 1)
    out[1:] = np.cumsum(np.arange(1, g_max + 1, dtype=float) ** exponent)
    return out


def _visit_gaps(targets, samples, radii, H, index):
    index = _lazy_index(samples, radii) if index is None else index
    gaps = np.zeros((radii.size, len(targets), H), dtype=np.int64)
    hits = np.zeros((radii.size, len(targets)), dtype=np.int64)
    for k, (h, r) in enumerate(zip(index, radii)):
        vis, cnt = h.visits(targets.states, r, H)
        g = np.diff(vis, axis=1, prepend=0)
        g[np.arange(H)[None, :] >= cnt[:, None]] = 0
        gaps[k], hits[k] = g, cnt
    return gaps, hits


def hitting_integral(targets: Trajectory, samples: Trajectory, grid, q_list, H: int = 32,
                     index=None) -> ScalingTable:
    """Hitting double integral ``log((1/N') sum_l (1/N_l) sum_j H(x_j)**(1-q))``.

    For each target the sample orbit is followed until it has visited the
    ball ``H`` times; ``N_l`` is the index of that last visit, and every
    sample point before it contributes its first hitting time.  Between two
    consecutive visits separated by ``g`` steps the hitting times run
    ``g, g-1, ..., 1``, so the inner sum is a prefix sum of powers.
    """
    if H < 1:
        raise ValueError("H must be at least 1")
    q = _q_list(q_list)
    radii = _radii(grid)
    gaps, hits = _visit_gaps(targets, samples, radii, H, index)
    n_used = gaps.sum(axis=2)
    ok = hits > 0
    prefixes = {qq: power_prefix(1.0 - qq, int(gaps.max())) for qq in q if qq != 1.0}
    lv = np.zeros((q.size, radii.size))
    for i, qq in enumerate(q):
        if qq == 1.0:
            continue
        P = prefixes[qq]
        for k in range(radii.size):
            sel = ok[k]
            if not sel.any():
                lv[i, k] = np.nan
                continue
            inner = P[gaps[k, sel]].sum(axis=1) / n_used[k, sel]
            lv[i, k] = math.log(np.mean(inner))
    dropped = np.broadcast_to(np.count_nonzero(~ok, axis=1), lv.shape).copy()
    flagged = dropped > 0.5 * len(targets)
    meta = {"N": len(samples), "N_targets": len(targets), "H": H,
            "truncated": np.count_nonzero(hits < H, axis=1).tolist(),
            "seeds": (targets.seed, samples.seed)}
    return ScalingTable(q, radii, lv, "Upsilon", dropped, flagged, meta)


def first_return_integral(traj: Trajectory, grid, q_list, n_centers: Optional[int] = None,
                          index=None) -> ScalingTable:
    """``log`` of the Birkhoff average of ``H_{B(x,r)}(x)**(1-q)`` over centres
    ``x_0 .. x_{n_centers-1}``, searching the rest of the orbit for returns."""
    q = _q_list(q_list)
    radii = _radii(grid)
    n_centers = len(traj) // 2 if n_centers is None else n_centers
    if not 0 < n_centers <= len(traj):
        raise ValueError("n_centers must lie in [1, len(traj)]")
    index = _lazy_index(traj, radii) if index is None else index
    centers = np.arange(n_centers)
    lv = np.zeros((q.size, radii.size))
    dropped = np.zeros((q.size, radii.size), dtype=np.int64)
    for k, (h, r) in enumerate(zip(index, radii)):
        t = h.return_times(centers, r)
        ret = t[t > 0].astype(float)
        dropped[:, k] = n_centers - ret.size
        for i, qq in enumerate(q):
            if qq != 1.0:
                lv[i, k] = math.log(np.mean(ret ** (1.0 - qq))) if ret.size else np.nan
    meta = {"N": len(traj), "n_centers": n_centers, "seeds": (traj.seed,)}
    return ScalingTable(q, radii, lv, "GammaReturn", dropped, dropped > 0.5 * n_centers, meta)


def mean_return_time(traj: Trajectory, z_index: Sequence[int], r: float) -> np.ndarray:
    """First return times of the given orbit points into their own ``r``-ball
    (0 when the orbit never returns)."""
    return SpatialHash(traj.states, r, traj.metric).return_times(z_index, r)
