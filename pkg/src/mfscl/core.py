"""Grids, flux models, initial data, and run configuration.

The model problem is the scalar conservation law u_t + f(u)_x = 0 on a
symmetric interval [-L, L], together with its viscous regularization
m_t + f(m)_x = (eps^2/2) m_xx.  Two induced drift fields recur throughout:

    a(v)   = (f(v) - f(0)) / v
    a_k(v) = (f(v) - f(k)) / (v - k)

both continued across the removable singularity at v = k by the limit
value f'(k).  Everything in this module is immutable after construction
and safe to share between threads.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

# |v - k| below this (relative to max(1, |k|)) switches the secant slope
# a_k(v) to its limit f'(k); far below physical value scales, far above
# cancellation noise.
SINGULARITY_RTOL = 1e-8


class SimulationError(Exception):
    """Base class for numerical failures in this package."""


class ConfigError(SimulationError):
    """Malformed or inconsistent run configuration."""


class InstabilityError(SimulationError):
    """A solver produced NaN/overflow values."""


class BoundaryContaminationError(SimulationError):
    """The solution reached the Dirichlet boundary during the run."""


class MonotonicityError(SimulationError):
    """A particle configuration lost strict monotonicity."""


class NonContractionError(SimulationError):
    """A fixed-point iteration failed to contract."""


class DegenerateProblemError(SimulationError):
    """The requested evolution has no dynamics (zero speed and diffusion)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class Grid1D:
    """Uniform node-centered grid on [-L, L], both endpoints included."""

    half_length: float
    n_points: int
    dx: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n_points < 3:
            raise ConfigError(f"grid needs at least 3 points, got {self.n_points}")
        if not self.half_length > 0:
            raise ConfigError(f"grid half-length must be positive, got {self.half_length}")
        dx = 2.0 * self.half_length / (self.n_points - 1)
        object.__setattr__(self, "dx", dx)
        nodes = -self.half_length + dx * np.arange(self.n_points)
        nodes[-1] = self.half_length
        object.__setattr__(self, "nodes", _readonly(nodes))

    def nearest_index(self, x: float | np.ndarray):
        """Index of the node closest to ``x`` (clipped to the domain)."""
        i = np.rint((np.asarray(x) + self.half_length) / self.dx).astype(int)
        return np.clip(i, 0, self.n_points - 1)[()]


def make_grid(half_length: float, n_points: int) -> Grid1D:
    return Grid1D(float(half_length), int(n_points))


# ---------------------------------------------------------------------------
# flux models and induced drifts


@dataclass(frozen=True)
class FluxModel:
    """Scalar flux f with derivatives and convexity metadata."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[np.ndarray], np.ndarray]
    f_double_prime: Callable[[np.ndarray], np.ndarray]
    is_strictly_convex: bool

    def f_second_min_on(self, value_range: tuple[float, float], samples: int = 2001) -> float:
        """Minimum of f'' over a closed value range (dense sampling)."""
        lo, hi = value_range
        if hi < lo:
            lo, hi = hi, lo
        return float(np.min(self.f_double_prime(np.linspace(lo, hi, samples))))

    def max_abs_speed(self, bound: float, samples: int = 2001) -> float:
        """max |f'(u)| over |u| <= bound."""
        u = np.linspace(-bound, bound, samples)
        return float(np.max(np.abs(self.f_prime(u))))

    def sonic_point(self, bound: float) -> float:
        """Argmin of f over [-bound, bound] (unique for strictly convex f)."""
        if self.f_prime(-bound) >= 0.0:
            return -bound
        if self.f_prime(bound) <= 0.0:
            return bound
        lo, hi = -bound, bound
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.f_prime(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def burgers_flux() -> FluxModel:
    """f(u) = u^2 / 2, the strictly convex reference flux."""
    return FluxModel(
        name="burgers",
        f=lambda u: 0.5 * np.square(u),
        f_prime=lambda u: np.asarray(u, dtype=float) + 0.0,
        f_double_prime=lambda u: np.ones_like(np.asarray(u, dtype=float)),
        is_strictly_convex=True,
    )


FLUXES: dict[str, Callable[[], FluxModel]] = {"burgers": burgers_flux}


def drift_a_k(flux: FluxModel, v, k: float):
    """Secant drift a_k(v) = (f(v) - f(k)) / (v - k), with a_k(k) := f'(k)."""
    v = np.asarray(v, dtype=float)
    dv = v - k
    tol = SINGULARITY_RTOL * max(1.0, abs(k))
    safe = np.abs(dv) >= tol
    denom = np.where(safe, dv, 1.0)
    secant = (flux.f(v) - float(flux.f(np.float64(k)))) / denom
    out = np.where(safe, secant, float(flux.f_prime(np.float64(k))))
    return out[()]


def drift_a(flux: FluxModel, v):
    """Mean-field drift a(v) = (f(v) - f(0)) / v, with a(0) := f'(0)."""
    return drift_a_k(flux, v, 0.0)


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitialData:
    """Initial profile; one of riemann / sampled / analytic.

    ``evaluate`` is vectorized over positions.  ``sup_norm`` is the
    essential supremum of |u_in| (exact for riemann/sampled, sampled
    densely for analytic data).
    """

    kind: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    left: float | None = None
    right: float | None = None
    jump: float | None = None

    @property
    def is_riemann(self) -> bool:
        return self.kind == "riemann"


def riemann_initial(left: float, right: float, jump: float = 0.0) -> InitialData:
    """Two-state step: ``left`` for x < jump, ``right`` otherwise."""
    left, right, jump = float(left), float(right), float(jump)

    def evaluate(x):
        return np.where(np.asarray(x, dtype=float) < jump, left, right)[()]

    return InitialData(
        kind="riemann",
        evaluate=evaluate,
        sup_norm=max(abs(left), abs(right)),
        left=left,
        right=right,
        jump=jump,
    )


def sampled_initial(grid: Grid1D, values: np.ndarray) -> InitialData:
    values = _readonly(values)
    if values.shape != grid.nodes.shape:
        raise ConfigError("sampled initial data must match the grid")
    nodes = grid.nodes

    def evaluate(x):
        return np.interp(np.asarray(x, dtype=float), nodes, values)[()]

    return InitialData(kind="sampled", evaluate=evaluate, sup_norm=float(np.max(np.abs(values))))


def analytic_initial(fn: Callable[[np.ndarray], np.ndarray], half_length: float,
                     sup_norm: float | None = None) -> InitialData:
    if sup_norm is None:
        probe = np.linspace(-half_length, half_length, 4001)
        sup_norm = float(np.max(np.abs(fn(probe))))

    def evaluate(x):
        return np.asarray(fn(np.asarray(x, dtype=float)))[()]

    return InitialData(kind="analytic", evaluate=evaluate, sup_norm=float(sup_norm))


def compressive_initial() -> InitialData:
    """Step (1, -1): stationary-shock test case."""
    return riemann_initial(1.0, -1.0)


def expansive_initial() -> InitialData:
    """Step (-1, 1): rarefaction test case."""
    return riemann_initial(-1.0, 1.0)


# ---------------------------------------------------------------------------
# space-time fields


@dataclass(frozen=True)
class SpaceTimeField:
    """Time-stacked scalar field on a grid: values[j, i] = u(x_i, t_j)."""

    grid: Grid1D
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = _readonly(self.times)
        values = _readonly(self.values)
        if values.shape != (times.size, self.grid.n_points):
            raise ConfigError(
                f"field shape {values.shape} does not match "
                f"{times.size} times x {self.grid.n_points} nodes"
            )
        if times.size < 1 or np.any(np.diff(times) <= 0) and times.size > 1:
            raise ConfigError("field times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def nearest_time_index(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def slice_at(self, t: float) -> np.ndarray:
        """Field values at the stored time closest to ``t``."""
        return self.values[self.nearest_time_index(t)]

    def map_values(self, fn: Callable[[np.ndarray], np.ndarray]) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times, fn(self.values))


def constant_field(grid: Grid1D, times: np.ndarray, value: float) -> SpaceTimeField:
    times = np.asarray(times, dtype=float)
    return SpaceTimeField(grid, times, np.full((times.size, grid.n_points), float(value)))


# ---------------------------------------------------------------------------
# bounded continuous test functions


@dataclass(frozen=True)
class TestFunction:
    """Bounded continuous test function with a closed-form antiderivative."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))


def _log_cosh(x):
    # overflow-safe log(cosh(x)) = |x| + log1p(exp(-2|x|)) - log 2
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


TEST_FUNCTIONS: dict[str, TestFunction] = {
    "gaussian": TestFunction(
        "gaussian",
        fn=lambda x: np.exp(-0.5 * np.square(x)),
        antiderivative=lambda x: math.sqrt(math.pi / 2.0) * _erf_over_sqrt2(x),
    ),
    "lorentzian": TestFunction(
        "lorentzian",
        fn=lambda x: 1.0 / (1.0 + np.square(x)),
        antiderivative=np.arctan,
    ),
    "tanh": TestFunction("tanh", fn=np.tanh, antiderivative=_log_cosh),
}


def _erf_over_sqrt2(x):
    from scipy.special import erf

    return erf(np.asarray(x, dtype=float) / math.sqrt(2.0))


def get_test_functions(names: Sequence[str]) -> tuple[TestFunction, ...]:
    out = []
    for name in names:
        if name not in TEST_FUNCTIONS:
            raise ConfigError(f"unknown test function {name!r}; known: {sorted(TEST_FUNCTIONS)}")
        out.append(TEST_FUNCTIONS[name])
    return tuple(out)


# ---------------------------------------------------------------------------
# experiment configuration


#: Default numerical parameters (full production scale).
TABLE_DEFAULTS = {
    "half_length": 6.0,
    "final_time": 1.0,
    "n_points": 1201,
    "n_paths": 4001,
    "n_time_steps": 4000,
    "n_mc": 5000,
}

#: Scaled-down defaults so the whole verification suite runs in minutes.
DESK_DEFAULTS = {
    "half_length": 6.0,
    "final_time": 1.0,
    "n_points": 301,
    "n_paths": 1001,
    "n_time_steps": 1000,
    "n_mc": 200,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete specification of one simulation run."""

    epsilon: float = 1.0
    final_time: float = TABLE_DEFAULTS["final_time"]
    half_length: float = TABLE_DEFAULTS["half_length"]
    n_points: int = TABLE_DEFAULTS["n_points"]
    n_paths: int = TABLE_DEFAULTS["n_paths"]
    n_time_steps: int = TABLE_DEFAULTS["n_time_steps"]
    n_mc: int = TABLE_DEFAULTS["n_mc"]
    seed: int = 0
    flux: str = "burgers"
    initial: str = "compressive"
    initial_left: float = 1.0
    initial_right: float = -1.0
    initial_jump: float = 0.0
    test_functions: tuple[str, ...] = ("gaussian", "lorentzian", "tanh")
    p_moment: float = 1.0
    n_stored_times: int = 41
    cfl_safety: float = 0.4

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")
        for name in ("n_points", "n_paths", "n_time_steps", "n_mc", "n_stored_times"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.p_moment < 1:
            raise ConfigError("p_moment must be >= 1")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ConfigError("cfl_safety must lie in (0, 1]")
        if self.final_time <= 0 or self.half_length <= 0:
            raise ConfigError("final_time and half_length must be positive")
        if self.flux not in FLUXES:
            raise ConfigError(f"unknown flux {self.flux!r}; known: {sorted(FLUXES)}")
        if self.initial not in ("compressive", "expansive", "riemann"):
            raise ConfigError("initial must be compressive, expansive or riemann")
        get_test_functions(self.test_functions)

    # -- derived objects ---------------------------------------------------

    def grid(self) -> Grid1D:
        return make_grid(self.half_length, self.n_points)

    def flux_model(self) -> FluxModel:
        return FLUXES[self.flux]()

    def initial_data(self) -> InitialData:
        if self.initial == "compressive":
            return compressive_initial()
        if self.initial == "expansive":
            return expansive_initial()
        return riemann_initial(self.initial_left, self.initial_right, self.initial_jump)

    def thetas(self) -> tuple[TestFunction, ...]:
        return get_test_functions(self.test_functions)

    def particle_seeds(self) -> np.ndarray:
        """Uniform particle seeding over [-L, L], independent of the grid."""
        return np.linspace(-self.half_length, self.half_length, self.n_paths)

    def sde_dt(self) -> float:
        return self.final_time / self.n_time_steps

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for key in _CONFIG_KEYS:
            value = getattr(self, key)
            if key == "test_functions":
                value = ",".join(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)

    @classmethod
    def desk_scale(cls, **kwargs) -> "ExperimentConfig":
        merged = dict(DESK_DEFAULTS)
        merged.update(kwargs)
        return cls(**merged)


_CONFIG_KEYS = (
    "epsilon", "final_time", "half_length", "n_points", "n_paths",
    "n_time_steps", "n_mc", "seed", "flux", "initial", "initial_left",
    "initial_right", "initial_jump", "test_functions", "p_moment",
    "n_stored_times", "cfl_safety",
)

_INT_KEYS = {"n_points", "n_paths", "n_time_steps", "n_mc", "seed", "n_stored_times"}
_STR_KEYS = {"flux", "initial"}


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse a flat ``key = value`` configuration (``#`` comments).

    Missing keys fall back to the production defaults; unknown keys are
    rejected.
    """
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key == "test_functions":
                values[key] = tuple(s.strip() for s in val.split(",") if s.strip())
            elif key in _INT_KEYS:
                values[key] = int(val)
            elif key in _STR_KEYS:
                values[key] = val
            else:
                values[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {val!r}") from exc
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
