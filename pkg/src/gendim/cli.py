"""Command-line front end: ``gendim run <experiment>`` and ``gendim compare``.

Every run resolves one flat configuration (defaults, then an optional
``key=value`` file, then flags), writes its CSVs into a staging directory
and moves them into ``--out`` only once the whole experiment succeeded.
Each CSV starts with ``# config_hash=...``; ``manifest.txt`` records the
configuration, library versions, wall time and the random streams used, and
``config.txt`` can be fed back through ``--config`` to reproduce the run.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import math
import os
import platform
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynsys import SystemKind, generate_trajectory, make_system
from .errors import FitError, InsufficientDataError

EXIT_OK, EXIT_INVALID, EXIT_DATA = 0, 2, 3

EXPERIMENTS = ("gamma", "upsilon", "return-times", "tail", "blockmax", "localdim", "dei",
               "ratefn", "hitting-ldp", "ingest-spectrum")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# value parsing


def parse_list(text: str, integer: bool = False) -> list:
    """``"2..6"`` (inclusive, step 1), ``"0:1:0.25"`` (start:stop:step,
    inclusive) and comma-separated mixtures such as ``"-1,0,0.5,2..4"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..")
            lo, hi = float(a), float(b)
            if hi < lo:
                raise ConfigError(f"empty range {part!r}")
            out.extend(lo + k for k in range(int(math.floor(hi - lo + 1e-9)) + 1))
        elif ":" in part:
            a, b, c = (float(v) for v in part.split(":"))
            if c <= 0 or b < a:
                raise ConfigError(f"bad range {part!r}; expected start:stop:step with step > 0")
            n = int(math.floor((b - a) / c + 1e-9))
            out.extend(float(np.round(a + k * c, 12)) for k in range(n + 1))
        else:
            out.append(float(part))
    if not out:
        raise ConfigError(f"empty list {text!r}")
    if integer:
        if any(v != int(v) for v in out):
            raise ConfigError(f"expected integers, got {text!r}")
        return [int(v) for v in out]
    return out


def _fmt(v) -> str:
    if isinstance(v, list):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _opt_float(text):
    return None if text in (None, "", "none") else float(text)


# key -> (parser, default, help)
OPTIONS = {
    "system": (str, "arnold-cat", "dynamical system"),
    "input": (str, "", "input series for ingest-spectrum"),
    "format": (str, "csv", "input format: csv or raw-f64"),
    "dim": (int, 1, "state dimension of raw-f64 input"),
    "seed": (int, 0, "master seed"),
    "threads": (int, 0, "worker threads (0: all cores)"),
    "length": (int, None, "sample orbit length (per replica)"),
    "targets": (int, None, "number of targets or centres"),
    "H": (int, 32, "visits per target in the hitting integral"),
    "q": (lambda s: parse_list(s), None, "q values, e.g. 2..6 or -1,0,0.5"),
    "r_min": (float, 10 ** -2.5, "smallest radius"),
    "r_max": (float, 0.1, "largest radius"),
    "radii": (int, 12, "number of log-spaced radii"),
    "fit_lo": (_opt_float, None, "lower end of the fit range (radius or u)"),
    "fit_hi": (_opt_float, None, "upper end of the fit range (radius or u)"),
    "model": (str, "inverse-log", "extrapolation model: inverse-log or log"),
    "quantile": (float, None, "threshold quantile in (0, 1)"),
    "p": (lambda s: parse_list(s), [0.95, 0.98, 0.995], "quantiles for ingest-spectrum"),
    "replicas": (int, None, "independent replicas"),
    "block": (int, 2000, "block length for block maxima"),
    "u_max": (float, 12.0, "largest tail threshold u"),
    "u_step": (float, 0.05, "tail threshold spacing"),
    "stride": (int, 1, "centre stride for ingest-spectrum"),
    "window": (int, 0, "exclusion window around each centre"),
    "min_exceedances": (int, 50, "minimum exceedances per centre"),
    "s": (lambda s: parse_list(s), None, "rate-function abscissae, e.g. 0.8:2.4:0.05"),
    "r_levels": (lambda s: parse_list(s), [2.0 ** -k for k in range(4, 9)], "radii of empirical rate curves"),
    "r": (float, 2.0 ** -5, "radius for hitting-ldp"),
    "d1": (_opt_float, None, "information dimension for hitting-ldp"),
}

_EXPERIMENT_DEFAULTS = {
    "gamma": {"length": 10 ** 6, "targets": 10 ** 4, "q": [-1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0]},
    "upsilon": {"length": 2 * 10 ** 6, "targets": 10 ** 4, "q": [-1.0, 0.0, 0.5, 1.5, 2.0, 3.0, 4.0, 5.0]},
    "return-times": {"length": 10 ** 6, "targets": 10 ** 4, "q": [-1.0, 0.0, 0.5, 1.5, 2.0]},
    "tail": {"length": 10 ** 7, "replicas": 1, "q": [2.0, 3.0, 4.0]},
    "blockmax": {"length": 2 * 10 ** 7, "q": [2.0, 3.0, 4.0, 5.0]},
    "localdim": {"length": 10 ** 5, "targets": 1000, "quantile": 0.98, "q": [0.0, 1.0, 2.0, 3.0, 4.0]},
    "dei": {"length": 10 ** 6, "replicas": 20, "quantile": 0.997, "q": [2.0, 3.0, 4.0]},
    "ratefn": {"system": "sierpinski", "length": 10 ** 6, "targets": 1000,
               "s": parse_list("0.8:2.4:0.05")},
    "hitting-ldp": {"system": "sierpinski", "length": 10 ** 6, "targets": 1000, "s": parse_list("0:1.6:0.05")},
    "ingest-spectrum": {"q": [2.0, 3.0]},
}

# keys that cannot change results
_UNHASHED = ("threads",)


def load_config_file(path) -> dict:
    """``key=value`` lines; ``#`` comments and ``[section]`` headers are ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#") or (text.startswith("[") and text.endswith("]")):
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
            k, v = (s.strip() for s in text.split("=", 1))
            k = k.replace("-", "_")
            if k != "experiment" and k not in OPTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown key {k!r}")
            out[k] = v
    return out


@dataclass
class RunConfig:
    experiment: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def lines(self, hashed_only=False) -> list:
        keys = sorted(k for k in self.values if not (hashed_only and k in _UNHASHED))
        return [f"experiment={self.experiment}"] + [f"{k}={_fmt(self.values[k])}" for k in keys]

    @property
    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.lines(True)).encode()).hexdigest()[:16]


def resolve_config(experiment, file_values: dict, flag_values: dict) -> RunConfig:
    experiment = experiment or file_values.get("experiment")
    if experiment is None:
        raise ConfigError("no experiment given (positional argument or experiment= in --config)")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    vals = {k: d for k, (_, d, _) in OPTIONS.items()}
    vals.update(_EXPERIMENT_DEFAULTS[experiment])
    for source in (file_values, flag_values):
        for k, v in source.items():
            if k == "experiment" or v is None or v == "":
                continue
            conv = OPTIONS[k][0]
            try:
                vals[k] = conv(v) if isinstance(v, str) else v
            except ValueError as exc:
                raise ConfigError(f"invalid value for {k}: {v!r} ({exc})") from None
    cfg = RunConfig(experiment, vals)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    v = cfg.values

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    try:
        make_system(v["system"])
    except ValueError:
        raise ConfigError(f"unknown system {v['system']!r}; choose from "
                          f"{', '.join(k.value for k in SystemKind)}") from None
    need(v["seed"] >= 0, f"seed must be non-negative, got {v['seed']}")
    need(v["threads"] >= 0, f"threads must be non-negative, got {v['threads']}")
    for k in ("length", "targets", "replicas", "H", "block", "radii", "stride", "min_exceedances"):
        if v[k] is not None:
            need(v[k] >= 1, f"{k} must be positive, got {v[k]}")
    need(v["window"] >= 0, f"window must be non-negative, got {v['window']}")
    if v["quantile"] is not None:
        need(0 < v["quantile"] < 1, f"quantile must lie strictly between 0 and 1, got {v['quantile']}")
    need(all(0 < p < 1 for p in v["p"]), f"quantiles p must lie strictly between 0 and 1, got {v['p']}")
    need(0 < v["r_min"] < v["r_max"], f"need 0 < r_min < r_max, got {v['r_min']}, {v['r_max']}")
    need(v["radii"] >= 3, "need at least three radii")
    need(v["u_step"] > 0 and v["u_max"] > 0, "u_max and u_step must be positive")
    need(v["model"] in ("inverse-log", "log"), f"model must be inverse-log or log, got {v['model']!r}")
    need(v["format"] in ("csv", "raw-f64"), f"format must be csv or raw-f64, got {v['format']!r}")
    need(all(0 < r < 1 for r in v["r_levels"]), "r_levels must lie in (0, 1)")
    need(0 < v["r"] < 1, f"r must lie in (0, 1), got {v['r']}")
    if v["fit_lo"] is not None and v["fit_hi"] is not None:
        need(v["fit_lo"] < v["fit_hi"], "fit_lo must be below fit_hi")
    e = cfg.experiment
    if e in ("tail", "blockmax", "dei"):
        need(all(q == int(q) and q >= 2 for q in v["q"]), f"{e} needs integer q >= 2, got {v['q']}")
    if e == "return-times":
        need(v["targets"] <= v["length"], "targets (return-time centres) cannot exceed length")
    if e == "blockmax":
        need(v["length"] // v["block"] >= 10, "blockmax needs at least 10 blocks (length / block)")
    if e == "ingest-spectrum":
        need(bool(v["input"]), "ingest-spectrum needs --input")
        need(Path(v["input"]).is_file(), f"input file {v['input']!r} does not exist")


# ---------------------------------------------------------------------------
# running


@dataclass
class Run:
    cfg: RunConfig
    stage: Path
    files: list = field(default_factory=list)
    ledger: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def comment(self) -> str:
        return f"config_hash={self.cfg.hash} experiment={self.cfg.experiment}"

    def path(self, name) -> Path:
        self.files.append(name)
        return self.stage / name

    def trajectory(self, role, length, stream):
        v = self.cfg.values
        system = make_system(v["system"])
        self.ledger.append(f"{role}: system={system.name} seed={v['seed']} stream={stream} length={length}")
        return generate_trajectory(system, v["seed"], length, stream=stream)


def _grid(v):
    from .recurrence import RadiusGrid
    return RadiusGrid.spanning(v["r_min"], v["r_max"], v["radii"])


def _fit_range(v):
    if v["fit_lo"] is None and v["fit_hi"] is None:
        return None
    return (v["fit_lo"] if v["fit_lo"] is not None else 0.0,
            v["fit_hi"] if v["fit_hi"] is not None else math.inf)


def _exp_gamma(run: Run):
    from .recurrence import build_index, correlation_integral
    from .scaling import information_dimension, spectrum_from_table
    v = run.cfg.values
    targets = run.trajectory("targets", v["targets"], 0)
    samples = run.trajectory("samples", v["length"], 1)
    grid = _grid(v)
    index = build_index(samples, grid.values)
    table = correlation_integral(targets, samples, grid, v["q"], index=index)
    d1 = None
    if 1.0 in v["q"]:
        d1 = information_dimension(targets, samples, grid, _fit_range(v), index)[0]
    table.to_csv(run.path("scaling_table.csv"), run.comment)
    spectrum_from_table(table, v["q"], _fit_range(v), d1).to_csv(run.path("spectrum.csv"), run.comment)


def _exp_upsilon(run: Run):
    from .recurrence import hitting_integral
    from .scaling import extrapolate_dimension, local_slopes, spectrum_from_table
    v = run.cfg.values
    q = [x for x in v["q"] if x != 1.0]
    if len(q) < len(v["q"]):
        run.notes.append("q=1 skipped: the hitting integral is identically zero there")
    targets = run.trajectory("targets", v["targets"], 0)
    samples = run.trajectory("samples", v["length"], 1)
    table = hitting_integral(targets, samples, _grid(v), q, H=v["H"])
    table.to_csv(run.path("scaling_table.csv"), run.comment)
    spectrum_from_table(table, q, _fit_range(v)).to_csv(run.path("spectrum.csv"), run.comment)
    with open(run.path("extrapolation.csv"), "w", newline="") as fh:
        fh.write(f"# {run.comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "dq", "B", "stderr", "model"])
        for qq in q:
            if qq < 2:
                continue
            try:
                ex = extrapolate_dimension(local_slopes(table, qq), model=v["model"])
            except (FitError, ValueError) as exc:
                run.notes.append(f"no extrapolation at q={qq:g}: {exc}")
                continue
            w.writerow([repr(qq), repr(ex.dq), repr(ex.B), repr(ex.stderr), ex.model])


def _exp_return_times(run: Run):
    from .recurrence import first_return_integral
    from .scaling import spectrum_from_table
    v = run.cfg.values
    q = [x for x in v["q"] if x != 1.0]
    traj = run.trajectory("orbit", v["length"], 0)
    table = first_return_integral(traj, _grid(v), q, n_centers=v["targets"])
    table.to_csv(run.path("scaling_table.csv"), run.comment)
    spectrum_from_table(table, q, _fit_range(v)).to_csv(run.path("spectrum.csv"), run.comment)


def _replica_ledger(run: Run, q_max, replicas, length):
    from .evt import replica_stream0
    v = run.cfg.values
    for rep in range(replicas):
        s0 = replica_stream0(rep, q_max)
        run.ledger.append(f"replica {rep}: system={v['system']} seed={v['seed']} "
                          f"streams={s0}..{s0 + q_max - 1} length={length}")


def _exp_tail(run: Run):
    from .evt import sample_tails, tau_from_tail
    from .scaling import DimensionSpectrum
    v = run.cfg.values
    q = [int(x) for x in v["q"]]
    u = np.round(np.arange(0.0, v["u_max"] + 0.5 * v["u_step"], v["u_step"]), 12)
    _replica_ledger(run, max(q), v["replicas"], v["length"])
    tails = sample_tails(make_system(v["system"]), q, v["length"], u, v["seed"], v["replicas"])
    with open(run.path("tail.csv"), "w", newline="") as fh:
        fh.write(f"# {run.comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", "u", "log_sf", "count", "n", "flagged"])
        for qq in q:
            t = tails[qq]
            for k in range(u.size):
                ls = math.log(t.sf[k]) if t.counts[k] > 0 else math.nan
                w.writerow([qq, repr(float(u[k])), repr(ls), int(t.counts[k]), t.n, int(t.flagged[k])])
    urange = None
    if v["fit_lo"] is not None or v["fit_hi"] is not None:
        urange = (v["fit_lo"] if v["fit_lo"] is not None else -math.inf,
                  v["fit_hi"] if v["fit_hi"] is not None else math.inf)
    tau, se, lo, hi = [], [], [], []
    for qq in q:
        t, s, (ulo, uhi) = tau_from_tail(tails[qq], urange)
        tau.append(t)
        se.append(s)
        lo.append(ulo)
        hi.append(uhi)
    qa = np.asarray(q, dtype=float)
    spec = DimensionSpectrum(qa, tau, np.asarray(tau) / (qa - 1), np.asarray(se) / (qa - 1),
                             "ExceedanceFit", (math.exp(-max(hi)), math.exp(-min(lo))))
    spec.to_csv(run.path("spectrum.csv"), run.comment)


def _exp_blockmax(run: Run):
    from .evt import dq_from_gev, fit_gev, gev_stderr, sample_block_maxima, write_gev_csv
    from .scaling import DimensionSpectrum
    v = run.cfg.values
    q = [int(x) for x in v["q"]]
    n = v["block"]
    _replica_ledger(run, max(q), 1, v["length"])
    maxima = sample_block_maxima(make_system(v["system"]), q, v["length"], n, v["seed"])
    rows, dq, se = [], [], []
    for qq in q:
        fit = fit_gev(maxima[qq])
        rows.append((qq, n, fit))
        d, _ = dq_from_gev(fit, qq, n)
        dq.append(d)
        se.append(d * gev_stderr(fit, maxima[qq])[1] / fit.sigma)
    write_gev_csv(run.path("gev.csv"), rows, run.comment)
    qa = np.asarray(q, dtype=float)
    DimensionSpectrum(qa, np.asarray(dq) * (qa - 1), dq, se, "GevFit").to_csv(run.path("spectrum.csv"), run.comment)


def _exp_localdim(run: Run):
    from .evt import dq_from_local_dims, local_dimensions
    from .scaling import DimensionSpectrum
    v = run.cfg.values
    traj = run.trajectory("orbit", v["length"], 0)
    n_c = min(v["targets"], len(traj))
    centers = np.linspace(0, len(traj) - 1, n_c).astype(np.int64)
    sample = local_dimensions(traj, v["quantile"], center_indices=centers, window=v["window"],
                              min_exceedances=v["min_exceedances"])
    if len(sample) == 0:
        raise InsufficientDataError(f"no centre reached {v['min_exceedances']} exceedances", 0)
    sample.to_csv(run.path("localdim.csv"), run.comment)
    qa = np.asarray(v["q"], dtype=float)
    dq = np.array([dq_from_local_dims(sample, x) for x in qa])
    DimensionSpectrum(qa, dq * (qa - 1), dq, np.full(qa.size, np.nan), "LocalDimFormula",
                      (sample.r_eff, sample.r_eff)).to_csv(run.path("spectrum.csv"), run.comment)


def _exp_dei(run: Run):
    from .dei import ANALYTIC_KINDS, PRE_RUN, PRE_RUN_STREAM0, theta_q_analytic, theta_spectrum, write_dei_csv
    v = run.cfg.values
    system = make_system(v["system"])
    q = [int(x) for x in v["q"]]
    run.ledger.append(f"threshold pre-run: seed={v['seed']} streams={PRE_RUN_STREAM0}.."
                      f"{PRE_RUN_STREAM0 + max(q) - 1} length={PRE_RUN}")
    _replica_ledger(run, max(q), v["replicas"], v["length"])
    est = theta_spectrum(system, q, v["length"], v["quantile"], v["replicas"], v["seed"])
    if system.kind in ANALYTIC_KINDS:
        est += [theta_q_analytic(system, qq, m) for m in ("AnalyticClosedForm", "AnalyticQuadrature")
                for qq in q]
    write_dei_csv(run.path("dei.csv"), est, run.comment)


def _analytic_tau(system):
    from .largedev import sierpinski_tau, uniform_tau
    if system.kind is SystemKind.SIERPINSKI:
        return sierpinski_tau(system.params)
    if system.kind is SystemKind.ARNOLD_CAT:
        return uniform_tau(2.0)
    if system.kind is SystemKind.THREE_X:
        return uniform_tau(1.0)
    return None


def _d1_of(tau, h=1e-5):
    return float((tau(1 + h) - tau(1 - h)) / (2 * h))


def _write_curves(path, curves, comment):
    for i, c in enumerate(curves):
        c.to_csv(path, comment, header=i == 0, mode="w" if i == 0 else "a")


def _exp_ratefn(run: Run):
    from .evt import fixed_radius_local_dims
    from .largedev import empirical_rate_local_dim, legendre
    v = run.cfg.values
    system = make_system(v["system"])
    s = np.asarray(v["s"], dtype=float)
    curves = []
    tau = _analytic_tau(system)
    if tau is not None:
        curves += [legendre(k, tau, s) for k in ("Q", "Qhat", "fAlpha")]
    else:
        run.notes.append(f"no analytic tau for {system.name}; only empirical curves written")
    centers = run.trajectory("centres", v["targets"], 0)
    samples = run.trajectory("samples", v["length"], 1)
    for r, sample in zip(v["r_levels"], fixed_radius_local_dims(centers, samples, v["r_levels"])):
        curves.append(empirical_rate_local_dim(sample, s, r))
    _write_curves(run.path("ratefn.csv"), curves, run.comment)


def _exp_hitting_ldp(run: Run):
    from .largedev import empirical_rate_hitting, legendre
    v = run.cfg.values
    system = make_system(v["system"])
    tau = _analytic_tau(system)
    d1 = v["d1"]
    if d1 is None:
        if tau is None:
            raise ConfigError(f"hitting-ldp on {system.name} needs --d1 (no analytic spectrum)")
        d1 = _d1_of(tau)
    s = np.asarray(v["s"], dtype=float)
    run.ledger.append(f"targets: system={system.name} seed={v['seed']} stream=0 length={v['targets']}")
    run.ledger.append(f"samples: system={system.name} seed={v['seed']} stream=1 length={v['length']}")
    emp = empirical_rate_hitting(system, v["r"], s, d1, v["targets"], v["length"], v["seed"], v["H"], tau)
    curves = [emp]
    if tau is not None:
        ref = legendre("Qhat", tau, d1 + s)
        ref.s = s
        curves.append(ref)
    _write_curves(run.path("hitting_ldp.csv"), curves, run.comment)


def _exp_ingest(run: Run):
    from .ingest import load_series, quantile_spectrum
    v = run.cfg.values
    series = load_series(v["input"], v["format"], v["dim"])
    with open(v["input"], "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    run.ledger.append(f"input: {v['input']} sha256={digest} states={series.length} dim={series.dim}")
    spec = quantile_spectrum(series, v["p"], v["q"], v["stride"], v["window"], v["min_exceedances"])
    spec.to_csv(run.path("spectrum.csv"), run.comment)


_RUNNERS = {
    "gamma": _exp_gamma, "upsilon": _exp_upsilon, "return-times": _exp_return_times,
    "tail": _exp_tail, "blockmax": _exp_blockmax, "localdim": _exp_localdim, "dei": _exp_dei,
    "ratefn": _exp_ratefn, "hitting-ldp": _exp_hitting_ldp, "ingest-spectrum": _exp_ingest,
}


def _versions() -> list:
    import numba
    import scipy
    return [f"gendim={__version__}", f"numpy={np.__version__}", f"scipy={scipy.__version__}",
            f"numba={numba.__version__}", f"python={platform.python_version()}"]


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def run(cfg: RunConfig, out) -> list:
    """Run one experiment and publish its files into ``out``; returns their names."""
    out = Path(out)
    if (out / "manifest.txt").exists():
        raise ConfigError(f"{out} already holds a completed run; choose another --out")
    out.mkdir(parents=True, exist_ok=True)
    clash = [f for f in os.listdir(out) if f.endswith(".csv")]
    if clash:
        raise ConfigError(f"{out} already contains result files ({', '.join(sorted(clash))})")
    if cfg["threads"]:
        import numba
        numba.set_num_threads(min(cfg["threads"], numba.config.NUMBA_NUM_THREADS))
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        r = Run(cfg, stage)
        t0 = time.perf_counter()
        _RUNNERS[cfg.experiment](r)
        wall = time.perf_counter() - t0
        with open(stage / "config.txt", "w") as fh:
            fh.write("[run]\n" + "\n".join(cfg.lines()) + "\n")
        with open(stage / "manifest.txt", "w") as fh:
            fh.write(f"config_hash={cfg.hash}\n")
            fh.write("[config]\n" + "\n".join(cfg.lines()) + "\n")
            fh.write("[versions]\n" + "\n".join(_versions()) + "\n")
            fh.write(f"[timing]\nwall_seconds={wall:.3f}\n")
            fh.write("[seeds]\n" + "\n".join(r.ledger) + "\n")
            fh.write("[files]\n" + "\n".join(f"{f} sha256={_sha256(stage / f)}" for f in r.files) + "\n")
            if r.notes:
                fh.write("[notes]\n" + "\n".join(r.notes) + "\n")
        # the manifest goes last: its presence marks a completed run
        for name in r.files + ["config.txt", "manifest.txt"]:
            os.replace(stage / name, out / name)
        return r.files + ["config.txt", "manifest.txt"]
    finally:
        shutil.rmtree(stage, ignore_errors=True)


# ---------------------------------------------------------------------------
# compare


def _read_result(path):
    with open(path) as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise ConfigError(f"{path}: no rows")
    if "dq" in rows[0]:
        value, err = "dq", "stderr"
    elif "theta" in rows[0]:
        value, err = "theta", "theta_stderr"
    else:
        raise ConfigError(f"{path}: not a spectrum or DEI result (no dq or theta column)")
    if "method" in rows[0]:
        methods = {r["method"] for r in rows}
        if len(methods) > 1:
            # DEI files carry analytic rows next to the estimate; compare estimates
            rows = [r for r in rows if r["method"] in ("Suveges",)] or rows
    num = lambda s: float(s) if s not in ("", None) else math.nan
    return {float(r["q"]): (num(r[value]), num(r.get(err))) for r in rows}, value


def compare(path_a, path_b, out=None) -> list:
    """Per-q differences ``b - a`` with the combined standard error."""
    a, ka = _read_result(path_a)
    b, kb = _read_result(path_b)
    if ka != kb:
        raise ConfigError(f"cannot compare a {ka} result with a {kb} result")
    if sorted(a) != sorted(b):
        raise ConfigError(f"q grids differ: {sorted(a)} vs {sorted(b)}")
    rows = []
    for q in sorted(a):
        (va, ea), (vb, eb) = a[q], b[q]
        comb = math.hypot(ea, eb) if np.isfinite(ea) and np.isfinite(eb) else math.nan
        diff = vb - va
        z = diff / comb if comb > 0 else (0.0 if diff == 0 else math.nan)
        rows.append((q, va, vb, diff, ea, eb, comb, z))
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        fh.write(f"# compare a={_sha256(path_a)[:16]} b={_sha256(path_b)[:16]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q", f"{ka}_a", f"{ka}_b", "diff", "stderr_a", "stderr_b", "stderr_combined", "z"])
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
    finally:
        if out:
            fh.close()
    return rows


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", default=d, help="master seed")
    p.add_argument("--threads", default=d, help="cap on worker threads")
    p.add_argument("--out", default=d, help="output directory (default: results)")
    p.add_argument("--config", default=d, help="key=value configuration file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gendim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gendim {__version__}")
    _global_flags(parser, False)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("experiment", nargs="?", help=" | ".join(EXPERIMENTS))
    _global_flags(p_run, True)
    for key, (_, default, text) in OPTIONS.items():
        if key in ("seed", "threads"):
            continue
        flag = "--" + key.replace("_", "-")
        names = [flag] if flag == "--" + key else [flag, "--" + key]
        p_run.add_argument(*names, dest=key, default=argparse.SUPPRESS, help=text)
    p_cmp = sub.add_parser("compare", help="per-q differences between two result CSVs")
    p_cmp.add_argument("a")
    p_cmp.add_argument("b")
    p_cmp.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    ns = vars(args)
    try:
        if args.command == "compare":
            compare(args.a, args.b, args.output)
            return EXIT_OK
        file_values = load_config_file(ns["config"]) if ns.get("config") else {}
        flags = {k: v for k, v in ns.items() if k in OPTIONS}
        cfg = resolve_config(ns.get("experiment"), file_values, flags)
        out = ns.get("out") or "results"
        files = run(cfg, out)
        print(f"{cfg.experiment}: wrote {', '.join(files)} to {out} (config_hash={cfg.hash})")
        return EXIT_OK
    except InsufficientDataError as exc:
        print(f"gendim: insufficient data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"gendim: fit failed: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError, OSError) as exc:
        print(f"gendim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
