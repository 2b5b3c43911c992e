"""Load empirical state series and compute quantile-threshold dimension spectra."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dynsys import Trajectory
from .errors import InsufficientDataError, ParseError
from .evt import MIN_EXCEEDANCES, dq_from_local_dims, local_dimension_samples

FORMATS = ("csv", "raw-f64")


@dataclass(frozen=True)
class EmpiricalSeries:
    states: np.ndarray
    label: str = ""
    header: tuple = ()

    def __post_init__(self):
        st = np.array(self.states, dtype=np.float64)
        if st.ndim == 1:
            st = st[:, None]
        if not np.all(np.isfinite(st)):
            raise ValueError("series contains non-finite values")
        st.setflags(write=False)
        object.__setattr__(self, "states", st)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def length(self) -> int:
        return self.states.shape[0]

    def __len__(self):
        return self.length

    @property
    def bounding_box(self) -> np.ndarray:
        return np.stack([self.states.min(axis=0), self.states.max(axis=0)], axis=1)

    def min_length(self, p_max: float, min_exceedances: int = MIN_EXCEEDANCES) -> int:
        return int(math.ceil(10 * min_exceedances / (1.0 - p_max)))

    def to_trajectory(self) -> Trajectory:
        return Trajectory(self.states, label=self.label)


def _parse_csv(path: Path):
    header = []
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if rows:
                    raise ParseError(f"{path}:{lineno}: comment line after data", lineno)
                header.append(text[1:].strip())
                continue
            fields = next(csv.reader([text]))
            try:
                vals = [float(f) for f in fields]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: cannot parse {text!r} as numbers", lineno) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns, found {len(vals)}", lineno)
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}:{lineno}: non-finite value in {text!r}", lineno)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows", 0)
    return np.array(rows, dtype=np.float64), tuple(header)


def load_series(path, format: str = "csv", dim: int = 1, label: Optional[str] = None) -> EmpiricalSeries:
    """Read a state series.

    ``csv``: optional leading ``#`` lines, then one comma-separated state per
    row.  ``raw-f64``: little-endian float64 values, ``dim`` per state.
    """
    path = Path(path)
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    if not path.is_file():
        raise FileNotFoundError(path)
    if format == "csv":
        states, header = _parse_csv(path)
    else:
        raw = np.fromfile(path, dtype="<f8")
        if dim < 1 or raw.size % dim:
            raise ParseError(f"{path}: {raw.size} values do not split into states of dimension {dim}", 0)
        states = raw.reshape(-1, dim)
        bad = np.nonzero(~np.all(np.isfinite(states), axis=1))[0]
        if bad.size:
            raise ParseError(f"{path}: non-finite value in state {int(bad[0])}", int(bad[0]))
        header = ()
    return EmpiricalSeries(states, path.stem if label is None else label, header)


@dataclass
class QuantileSpectrum:
    """One row per quantile ``p``: extremes and mean of the local dimensions,
    ``D_q`` at the shared resolution, ``r_eff`` and the dropped-centre count."""

    p: np.ndarray
    q: np.ndarray
    d_min: np.ndarray
    d_mean: np.ndarray
    dq: np.ndarray
    d_max: np.ndarray
    r_eff: np.ndarray
    n_dropped: np.ndarray
    d_std: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def spread_violations(self) -> list:
        """Consecutive quantiles where the spread of local dimensions shrinks."""
        order = np.argsort(self.p)
        s = self.d_std[order]
        return [(self.p[order][i], self.p[order][i + 1]) for i in range(len(s) - 1) if s[i + 1] < s[i]]

    def to_csv(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["p", "d_min", "d_mean"] + [f"d_q{q:g}" for q in self.q]
                       + ["d_max", "r_eff", "n_dropped"])
            for i in range(self.p.size):
                w.writerow([repr(float(self.p[i])), repr(float(self.d_min[i])), repr(float(self.d_mean[i]))]
                           + [repr(float(v)) for v in self.dq[i]]
                           + [repr(float(self.d_max[i])), repr(float(self.r_eff[i])), int(self.n_dropped[i])])


def quantile_spectrum(series, p_list: Sequence[float], q_list: Sequence[float], stride: int = 1,
                      window: int = 0, min_exceedances: int = MIN_EXCEEDANCES,
                      check_length: bool = True) -> QuantileSpectrum:
    """Local dimensions at every ``stride``-th series point for each quantile
    ``p``, summarised as ``min``, ``mean``, ``D_q`` and ``max``."""
    p_list = np.asarray(sorted(p_list), dtype=float)
    q_arr = np.asarray(q_list, dtype=float)
    if p_list.size == 0 or np.any((p_list <= 0) | (p_list >= 1)):
        raise ValueError("quantiles must lie in (0, 1)")
    if stride < 1:
        raise ValueError("stride must be positive")
    traj = series.to_trajectory() if isinstance(series, EmpiricalSeries) else series
    n = len(traj)
    if check_length:
        need = int(math.ceil(10 * min_exceedances / (1.0 - p_list.max())))
        if n < need:
            raise InsufficientDataError(
                f"series of length {n} is too short for p={p_list.max()}: need {need}", n)
    centers = np.arange(0, n, stride)
    rows = {k: [] for k in ("d_min", "d_mean", "dq", "d_max", "r_eff", "n_dropped", "d_std")}
    samples = local_dimension_samples(traj, p_list, center_indices=centers, window=window,
                                      min_exceedances=min_exceedances)
    for p, s in zip(p_list, samples):
        if len(s) == 0:
            raise InsufficientDataError(f"no centre has {min_exceedances} exceedances at p={p}", 0)
        rows["d_min"].append(s.d1r.min())
        rows["d_mean"].append(s.d1r.mean())
        rows["d_max"].append(s.d1r.max())
        rows["dq"].append([dq_from_local_dims(s, q) for q in q_arr])
        rows["r_eff"].append(s.r_eff)
        rows["n_dropped"].append(s.n_dropped)
        rows["d_std"].append(s.d1r.std())
    a = {k: np.asarray(v) for k, v in rows.items()}
    return QuantileSpectrum(p_list, q_arr, a["d_min"], a["d_mean"], a["dq"].reshape(p_list.size, q_arr.size),
                            a["d_max"], a["r_eff"], a["n_dropped"].astype(np.int64), a["d_std"],
                            {"stride": stride, "window": window, "n_centers": centers.size})
