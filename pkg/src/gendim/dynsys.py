"""Maps, flows and random iterated function systems used throughout the package.

Every system is identified by a :class:`SystemSpec`.  Stepping is done by a
single compiled kernel keyed on an integer system code, so trajectory
generation and the product-system samplers in :mod:`gendim.evt` share the
same arithmetic and produce bit-identical orbits for identical seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from numba import njit

from .errors import DomainError, UnsupportedSystemError
from .rng import stream_rng

DEFAULT_BURN_IN = 1000
GAUSS_FLOOR = 1e-300
HENON_ESCAPE = 10.0
# The slope-2 branch of the Markov map is 2-to-1 on the binary grid, so
# rounded orbits fall onto the cycle {1/4, 3/4} within a few hundred steps.
# A uniform kick of this size each step supplies fresh low-order bits.
MARKOV_JITTER = 2.0 ** -40


class SystemKind(Enum):
    ARNOLD_CAT = "arnold-cat"
    HENON = "henon"
    SIERPINSKI = "sierpinski"
    LORENZ63 = "lorenz63"
    THREE_X = "three-x"
    GAUSS = "gauss"
    HEMMER = "hemmer"
    MARKOV_PL = "markov-pl"


class Metric(Enum):
    TORUS = "torus"
    EUCLIDEAN = "euclidean"
    INTERVAL = "interval"


# integer codes used inside compiled kernels
CAT, HENON, SIERPINSKI, LORENZ, THREE_X, GAUSS, HEMMER, MARKOV = range(8)
_CODES = {k: i for i, k in enumerate(SystemKind)}
METRIC_CODES = {Metric.TORUS: 0, Metric.EUCLIDEAN: 1, Metric.INTERVAL: 1}

_DIMS = {
    SystemKind.ARNOLD_CAT: 2,
    SystemKind.HENON: 2,
    SystemKind.SIERPINSKI: 2,
    SystemKind.LORENZ63: 3,
}
_DEFAULT_PARAMS = {
    SystemKind.HENON: (1.4, 0.3),
    SystemKind.SIERPINSKI: (0.25, 0.25, 0.5),
    SystemKind.LORENZ63: (10.0, 28.0, 8.0 / 3.0, 0.013),
}
ONE_D_KINDS = (SystemKind.THREE_X, SystemKind.GAUSS, SystemKind.HEMMER, SystemKind.MARKOV_PL)

# declared boxes that stored states must lie in: (lo, hi) per coordinate
_PHASE_BOX = {
    SystemKind.ARNOLD_CAT: ((0.0, 1.0), (0.0, 1.0)),
    SystemKind.HENON: ((-1.5, 1.5), (-0.5, 0.5)),
    SystemKind.SIERPINSKI: ((0.0, 1.0), (0.0, 1.0)),
    SystemKind.LORENZ63: ((-100.0, 100.0),) * 3,
    SystemKind.THREE_X: ((0.0, 1.0),),
    SystemKind.GAUSS: ((0.0, 1.0),),
    SystemKind.HEMMER: ((-1.0, 1.0),),
    SystemKind.MARKOV_PL: ((0.0, 1.0),),
}


@dataclass(frozen=True)
class SystemSpec:
    """A dynamical system together with its parameters.

    ``params`` is system specific: Hénon ``(a, b)``, Lorenz
    ``(sigma, rho, beta, dt)``, Sierpinski IFS ``(p1, p2, p3)``; the other
    maps take none.  Omitted parameters fall back to the standard values.
    """

    kind: SystemKind
    params: tuple = ()

    def __post_init__(self):
        kind = SystemKind(self.kind)
        object.__setattr__(self, "kind", kind)
        params = tuple(float(p) for p in self.params) or _DEFAULT_PARAMS.get(kind, ())
        object.__setattr__(self, "params", params)
        expected = len(_DEFAULT_PARAMS.get(kind, ()))
        if len(params) != expected:
            raise ValueError(f"{kind.value} takes {expected} parameters, got {len(params)}")
        if kind is SystemKind.SIERPINSKI:
            if min(params) <= 0 or abs(sum(params) - 1.0) > 1e-12:
                raise ValueError(f"IFS probabilities must be positive and sum to 1, got {params}")
        if kind is SystemKind.LORENZ63 and not params[3] > 0:
            raise ValueError(f"Lorenz step size must be positive, got {params[3]}")

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def dim(self) -> int:
        return _DIMS.get(self.kind, 1)

    @property
    def metric(self) -> Metric:
        if self.kind is SystemKind.ARNOLD_CAT:
            return Metric.TORUS
        if self.kind in ONE_D_KINDS:
            return Metric.INTERVAL
        return Metric.EUCLIDEAN

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def dt(self) -> Optional[float]:
        return self.params[3] if self.kind is SystemKind.LORENZ63 else None

    @property
    def phase_box(self) -> np.ndarray:
        return np.array(_PHASE_BOX[self.kind], dtype=float)

    def param_array(self) -> np.ndarray:
        return np.array(self.params if self.params else (0.0,), dtype=np.float64)


def make_system(name, dt=None, **params) -> SystemSpec:
    """Build a :class:`SystemSpec` from a name such as ``"henon"``.

    Keyword parameters override defaults (``a``, ``b`` for Hénon; ``sigma``,
    ``rho``, ``beta`` for Lorenz; ``p`` for the IFS).  ``dt`` is only valid for
    the Lorenz flow.
    """
    kind = SystemKind(name.replace("_", "-").lower())
    if kind is SystemKind.LORENZ63:
        s, r, b, d = _DEFAULT_PARAMS[kind]
        return SystemSpec(kind, (params.pop("sigma", s), params.pop("rho", r),
                                 params.pop("beta", b), d if dt is None else dt))
    if dt is not None:
        raise ValueError(f"dt is undefined for the map {kind.value}")
    if kind is SystemKind.HENON:
        a, b = _DEFAULT_PARAMS[kind]
        return SystemSpec(kind, (params.pop("a", a), params.pop("b", b)))
    if kind is SystemKind.SIERPINSKI:
        return SystemSpec(kind, tuple(params.pop("p", _DEFAULT_PARAMS[kind])))
    if params:
        raise ValueError(f"{kind.value} takes no parameters, got {sorted(params)}")
    return SystemSpec(kind)


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _step_inplace(code, params, x, u):
    """Advance ``x`` one step in place.  Returns 0, or 1 when the new state is
    unusable (Hénon escape, Gauss map at the origin)."""
    if code == CAT:
        a = 2.0 * x[0] + x[1]
        b = x[0] + x[1]
        x[0] = a - math.floor(a)
        x[1] = b - math.floor(b)
    elif code == HENON:
        a = 1.0 - params[0] * x[0] * x[0] + x[1]
        x[1] = params[1] * x[0]
        x[0] = a
        if abs(a) > HENON_ESCAPE:
            return 1
    elif code == SIERPINSKI:
        if u < params[0]:
            x[0] = 0.5 * x[0]
            x[1] = 0.5 * (x[1] + 1.0)
        elif u < params[0] + params[1]:
            x[0] = 0.5 * (x[0] + 1.0)
            x[1] = 0.5 * (x[1] + 1.0)
        else:
            x[0] = 0.5 * x[0]
            x[1] = 0.5 * x[1]
    elif code == LORENZ:
        dt = params[3]
        dx = params[0] * (x[1] - x[0])
        dy = x[0] * (params[1] - x[2]) - x[1]
        dz = x[0] * x[1] - params[2] * x[2]
        x[0] += dt * dx
        x[1] += dt * dy
        x[2] += dt * dz
    elif code == THREE_X:
        a = 3.0 * x[0]
        x[0] = a - math.floor(a)
    elif code == GAUSS:
        a = 1.0 / x[0]
        x[0] = a - math.floor(a)
        if x[0] <= GAUSS_FLOOR:
            return 1
    elif code == HEMMER:
        x[0] = 1.0 - 2.0 * math.sqrt(abs(x[0]))
    elif code == MARKOV:
        v = x[0]
        if v < 1.0 / 3.0:
            x[0] = 3.0 * v
        elif v < 2.0 / 3.0:
            x[0] = 5.0 / 3.0 - 2.0 * v
        else:
            x[0] = 3.0 * v - 2.0
        x[0] += (u - 0.5) * MARKOV_JITTER
        # rounding at the branch points can leave the unit interval
        if x[0] < 0.0:
            x[0] = 0.0
        elif x[0] > 1.0:
            x[0] = 1.0
    return 0


@njit(cache=True)
def _run(code, params, x, out, start, uniforms):
    """Store states into ``out[start:]``, stepping ``x`` after each store.

    Returns ``len(out)``, or ``-(i + 1)`` when the step after storing
    ``out[i]`` left phase space.
    """
    n = out.shape[0]
    d = x.shape[0]
    for i in range(start, n):
        for k in range(d):
            out[i, k] = x[k]
        u = uniforms[i] if uniforms.shape[0] > 0 else 0.5
        if _step_inplace(code, params, x, u) != 0:
            return -(i + 1)
    return n


@njit(cache=True)
def _distance(a, b, metric_code):
    s = 0.0
    for k in range(a.shape[0]):
        dx = a[k] - b[k]
        if metric_code == 0:
            dx -= math.floor(dx + 0.5)
        s += dx * dx
    return math.sqrt(s)


@njit(cache=True)
def _distances_to(points, z, metric_code, out):
    for i in range(points.shape[0]):
        out[i] = _distance(points[i], z, metric_code)


# ---------------------------------------------------------------------------
# python surface


def _as_state(system, state):
    x = np.array(state, dtype=np.float64).reshape(-1)
    if x.shape[0] != system.dim:
        raise ValueError(f"{system.name} states have dimension {system.dim}, got {x.shape[0]}")
    return x


def in_phase_space(system, state) -> bool:
    """Whether ``state`` lies in the declared phase-space box of ``system``."""
    x = _as_state(system, state)
    if not np.all(np.isfinite(x)):
        return False
    box = system.phase_box
    kind = system.kind
    if kind in (SystemKind.ARNOLD_CAT, SystemKind.THREE_X):
        return bool(np.all((x >= 0.0) & (x < 1.0)))
    if kind is SystemKind.GAUSS:
        return bool(0.0 < x[0] <= 1.0)
    return bool(np.all((x >= box[:, 0]) & (x <= box[:, 1])))


def step(system: SystemSpec, state, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Apply the system's map (or one Euler step of the flow) to ``state``.

    Only the Sierpinski IFS needs randomness: one uniform draw from ``rng``
    selects the branch.  The Markov map uses a draw, when ``rng`` is given,
    for its round-off kick (see ``MARKOV_JITTER``).  Raises :class:`DomainError` for states outside phase
    space and for the Gauss map at (numerically) zero.
    """
    x = _as_state(system, state)
    if system.kind is SystemKind.HENON:
        valid = bool(np.all(np.isfinite(x)) and np.all(np.abs(x) <= HENON_ESCAPE))
    else:
        valid = in_phase_space(system, x)
    if not valid:
        raise DomainError(f"state {x.tolist()} is outside the phase space of {system.name}")
    if system.kind is SystemKind.GAUSS and x[0] <= GAUSS_FLOOR:
        raise DomainError("the Gauss map is undefined at 0")
    u = 0.5
    if system.kind is SystemKind.SIERPINSKI:
        if rng is None:
            raise ValueError("the IFS needs a random generator to choose a branch")
        u = rng.random()
    elif system.kind is SystemKind.MARKOV_PL and rng is not None:
        u = rng.random()
    if _step_inplace(system.code, system.param_array(), x, u) != 0:
        if system.kind is SystemKind.GAUSS:
            raise DomainError(f"Gauss map image {x[0]!r} is at the origin")
        raise DomainError(f"{system.name} orbit escaped to {x.tolist()}")
    return x


def initial_state(system: SystemSpec, rng: np.random.Generator) -> np.ndarray:
    kind = system.kind
    if kind is SystemKind.HENON:
        return rng.uniform((-0.5, -0.1), (0.5, 0.1))
    if kind is SystemKind.LORENZ63:
        return rng.uniform((-15.0, -15.0, 5.0), (15.0, 15.0, 40.0))
    if kind is SystemKind.GAUSS:
        return np.array([1.0 - rng.random()])
    if kind is SystemKind.HEMMER:
        return rng.uniform(-1.0, 1.0, size=1)
    return rng.random(system.dim)


class TrajectoryStream:
    """Stateful orbit generator for one ``(seed, stream)`` pair.

    ``advance(n)`` returns the next ``n`` states (the current state first) and
    leaves the stream positioned after them, so long orbits can be produced
    in chunks with results identical to a single call.
    """

    def __init__(self, system: SystemSpec, seed: int, stream: int = 0,
                 burn_in: int = DEFAULT_BURN_IN):
        if burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        self.system = system
        self.seed = seed
        self.stream = stream
        self.burn_in = burn_in
        self.rng = stream_rng(seed, stream)
        self._params = system.param_array()
        self.state = initial_state(system, self.rng)
        self.restarts = 0
        if burn_in:
            self.advance(burn_in)

    def _recover(self):
        if self.system.kind is SystemKind.GAUSS:
            self.state = np.array([1.0 - self.rng.random()])
            return
        # Hénon escape: fresh seed-derived point plus a new burn-in
        self.restarts += 1
        if self.restarts > 100:
            raise DomainError("Hénon orbit keeps escaping; check parameters")
        self.state = initial_state(self.system, self.rng)
        if self.burn_in:
            self.advance(self.burn_in)

    def advance(self, n: int) -> np.ndarray:
        out = np.empty((n, self.system.dim))
        if self.system.kind in (SystemKind.SIERPINSKI, SystemKind.MARKOV_PL):
            uniforms = self.rng.random(n)
        else:
            uniforms = np.empty(0)
        pos = 0
        while pos < n:
            pos = _run(self.system.code, self._params, self.state, out, pos, uniforms)
            if pos < 0:
                pos = -pos
                self._recover()
        return out


@dataclass(frozen=True)
class Trajectory:
    """An immutable orbit ``x_0, ..., x_{len-1}`` stored as a ``(len, dim)`` array.

    ``system`` is ``None`` for externally supplied data.
    """

    states: np.ndarray
    system: Optional[SystemSpec] = None
    seed: Optional[int] = None
    burn_in: int = 0
    stream: int = 0
    label: str = ""

    def __post_init__(self):
        states = np.array(self.states, dtype=np.float64)
        if states.ndim == 1:
            states = states[:, None]
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def metric(self) -> Metric:
        return self.system.metric if self.system is not None else Metric.EUCLIDEAN

    def bounding_box(self) -> np.ndarray:
        if self.system is not None:
            return self.system.phase_box
        return np.stack([self.states.min(axis=0), self.states.max(axis=0)], axis=1)

    def to_csv(self, path):
        sys_name = self.system.name if self.system is not None else "external"
        dt = self.system.dt if self.system is not None else None
        params = ";".join(repr(p) for p in self.system.params) if self.system is not None else ""
        seed = "" if self.seed is None else self.seed
        lines = ["# system,seed,burn_in,dt,params",
                 f"# {sys_name},{seed},{self.burn_in},{'' if dt is None else repr(dt)},{params}"]
        lines += [",".join(f"{v:.17g}" for v in row) for row in self.states]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        from .ingest import load_series  # shares the CSV parser

        series = load_series(path)
        meta = series.header
        system = None
        seed = None
        burn_in = 0
        if len(meta) >= 2 and meta[0].replace(" ", "").startswith("system,seed"):
            fields = [f.strip() for f in meta[1].split(",")]
            if fields[0] != "external":
                params = tuple(float(p) for p in fields[4].split(";") if p) if len(fields) > 4 else ()
                system = SystemSpec(SystemKind(fields[0]), params)
            seed = int(fields[1]) if fields[1] else None
            burn_in = int(fields[2]) if fields[2] else 0
        return cls(series.states, system=system, seed=seed, burn_in=burn_in, label=series.label)


def generate_trajectory(system: SystemSpec, seed: int, length: int,
                        burn_in: int = DEFAULT_BURN_IN, stream: int = 0) -> Trajectory:
    """Orbit of ``length`` states after discarding ``burn_in`` iterates.

    The initial condition is drawn from the ``(seed, stream)`` generator, so
    the result is reproducible bit for bit.
    """
    if length < 1:
        raise ValueError("trajectory length must be at least 1")
    gen = TrajectoryStream(system, seed, stream=stream, burn_in=burn_in)
    return Trajectory(gen.advance(length), system=system, seed=seed,
                      burn_in=burn_in, stream=stream)


def distance(metric: Metric, a, b) -> float:
    """Distance between two points; the torus metric wraps each coordinate
    difference into ``[-1/2, 1/2]``."""
    a = np.atleast_1d(np.asarray(a, dtype=np.float64))
    b = np.atleast_1d(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(_distance(a, b, METRIC_CODES[Metric(metric)]))


def distances_to(metric: Metric, points, z) -> np.ndarray:
    """Vectorised distances from every row of ``points`` to ``z``."""
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    zz = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if zz.shape[0] != pts.shape[1]:
        raise ValueError(f"dimension mismatch: points have {pts.shape[1]} coordinates, z has {zz.shape[0]}")
    out = np.empty(pts.shape[0])
    _distances_to(pts, zz, METRIC_CODES[Metric(metric)], out)
    return out


# ---------------------------------------------------------------------------
# invariant densities of the one-dimensional maps


@dataclass(frozen=True)
class DensityModel:
    density: Callable[[float], float]
    derivative: Callable[[float], float]  # |DT|
    support: tuple
    breakpoints: tuple = ()
    entropy: Optional[float] = None
    # piecewise-constant data where the map is piecewise linear
    pieces: tuple = field(default=())


def _markov_density(x):
    return 3.0 / 5.0 if x < 1.0 / 3.0 else 6.0 / 5.0


def _markov_derivative(x):
    return 2.0 if 1.0 / 3.0 <= x < 2.0 / 3.0 else 3.0


def density_model(kind) -> DensityModel:
    """Closed-form invariant density and ``|DT|`` of a one-dimensional map."""
    kind = SystemKind(kind) if not isinstance(kind, SystemSpec) else kind.kind
    if kind is SystemKind.THREE_X:
        return DensityModel(lambda x: 1.0, lambda x: 3.0, (0.0, 1.0), entropy=math.log(3.0),
                            pieces=((1.0, 3.0, 1.0),))
    if kind is SystemKind.MARKOV_PL:
        # (density, |T'|, interval length) on I1, I2, I3
        return DensityModel(_markov_density, _markov_derivative, (0.0, 1.0),
                            breakpoints=(1.0 / 3.0, 2.0 / 3.0),
                            entropy=0.6 * math.log(3.0) + 0.4 * math.log(2.0),
                            pieces=((0.6, 3.0, 1 / 3), (1.2, 2.0, 1 / 3), (1.2, 3.0, 1 / 3)))
    if kind is SystemKind.GAUSS:
        ln2 = math.log(2.0)
        return DensityModel(lambda x: 1.0 / (ln2 * (1.0 + x)), lambda x: 1.0 / (x * x),
                            (0.0, 1.0), entropy=math.pi ** 2 / (6.0 * ln2))
    if kind is SystemKind.HEMMER:
        return DensityModel(lambda x: 0.5 * (1.0 - x),
                            lambda x: 1.0 / math.sqrt(abs(x)) if x != 0 else math.inf,
                            (-1.0, 1.0), breakpoints=(0.0,), entropy=0.5)
    raise UnsupportedSystemError(f"no closed-form density for {kind.value}")
