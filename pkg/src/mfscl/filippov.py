"""Set-valued drift machinery and the 1-D Filippov ODE solver.

For a sampled drift b(x, t) the local convex hull K_R[b](x, t) over the
ball B_R(x) reduces, in one dimension, to the interval

    [essinf_{|y-x|<=R} b(y, t), esssup_{|y-x|<=R} b(y, t)],

where node values stand in for the essential range (null sets are not
representable on a grid).  On top of it sit the drift distance d_R, the
one-sided Lipschitz seminorm, an explicit Euler integrator for the
differential inclusion dX/dt in K[b](X, t), and the verification of the
bound d_R <= sqrt(2 L(t) ||b^k(t) - b(t)||_1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .core import ConfigError, FluxModel, SimulationError, SpaceTimeField, drift_a_k


class EmptyWindowError(SimulationError):
    """The query ball contains no grid nodes."""


# ---------------------------------------------------------------------------
# range extrema with exact variable windows


class _RangeExtrema:
    """Sparse-table min/max over arbitrary index ranges of one row."""

    def __init__(self, row: np.ndarray):
        n = row.size
        levels = max(1, n.bit_length())
        self.maxes = [row]
        self.mins = [row]
        length = 1
        while 2 * length <= n:
            prev_max, prev_min = self.maxes[-1], self.mins[-1]
            self.maxes.append(np.maximum(prev_max[:-length], prev_max[length:]))
            self.mins.append(np.minimum(prev_min[:-length], prev_min[length:]))
            length *= 2
        del levels

    def query(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(min, max) over row[lo..hi] inclusive, elementwise; needs lo <= hi."""
        span = (hi - lo + 1).astype(np.float64)
        m = np.maximum(0, np.frexp(span)[1] - 1)  # floor(log2(span))
        m = np.minimum(m, len(self.maxes) - 1)
        length = (1 << m).astype(np.intp)
        upper = hi - length + 1
        mx = np.maximum(self._take(self.maxes, m, lo), self._take(self.maxes, m, upper))
        mn = np.minimum(self._take(self.mins, m, lo), self._take(self.mins, m, upper))
        return mn, mx

    @staticmethod
    def _take(tables, m: np.ndarray, idx: np.ndarray) -> np.ndarray:
        out = np.empty(idx.shape, dtype=float)
        for level in np.unique(m):
            sel = m == level
            out[sel] = tables[level][idx[sel]]
        return out


def _window_bounds(grid, x: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    half, dx = grid.half_length, grid.dx
    lo = np.ceil((x - radius + half) / dx - 1e-9).astype(np.intp)
    hi = np.floor((x + radius + half) / dx + 1e-9).astype(np.intp)
    return lo, hi


def _nearest_slice(field: SpaceTimeField, t: float) -> np.ndarray:
    return field.values[field.nearest_time_index(t)]


def local_esssup(field: SpaceTimeField, x: float, t: float, radius: float) -> float:
    """Max of sampled values over nodes within ``radius`` of x, at the
    stored slice nearest t."""
    mn, mx = _hull_interval(field, x, t, radius)
    return mx


def local_essinf(field: SpaceTimeField, x: float, t: float, radius: float) -> float:
    mn, mx = _hull_interval(field, x, t, radius)
    return mn


def _hull_interval(field: SpaceTimeField, x: float, t: float, radius: float) -> tuple[float, float]:
    if radius <= 0:
        raise ConfigError("radius must be positive")
    row = _nearest_slice(field, t)
    lo, hi = _window_bounds(field.grid, np.asarray([float(x)]), radius)
    lo_c = np.maximum(lo, 0)
    hi_c = np.minimum(hi, row.size - 1)
    if lo_c[0] > hi_c[0]:
        raise EmptyWindowError(f"no grid nodes within {radius} of x={x}")
    window = row[lo_c[0]: hi_c[0] + 1]
    return float(window.min()), float(window.max())


@dataclass(frozen=True)
class EnvelopeQuery:
    """Sampled drift together with a hull radius; node values stand in for
    the essential range."""

    field: SpaceTimeField
    radius: float

    def esssup(self, x: float, t: float) -> float:
        return local_esssup(self.field, x, t, self.radius)

    def essinf(self, x: float, t: float) -> float:
        return local_essinf(self.field, x, t, self.radius)

    def interval(self, x: float, t: float) -> tuple[float, float]:
        return _hull_interval(self.field, x, t, self.radius)


# ---------------------------------------------------------------------------
# drift distance and one-sided Lipschitz seminorm


def _check_compatible(b_approx: SpaceTimeField, b_limit: SpaceTimeField) -> None:
    ga, gl = b_approx.grid, b_limit.grid
    if ga.n_points != gl.n_points or not math.isclose(ga.half_length, gl.half_length):
        raise ConfigError("drift fields live on incompatible grids")


def d_R_distance(b_approx: SpaceTimeField, b_limit: SpaceTimeField, radius: float,
                 t: float) -> float:
    """esssup_x dist(b_approx(x, t), K_R[b_limit](x, t)) over grid nodes."""
    _check_compatible(b_approx, b_limit)
    approx = _nearest_slice(b_approx, t)
    limit = _nearest_slice(b_limit, t)
    k = int(math.floor(radius / b_limit.grid.dx + 1e-9))
    size = 2 * k + 1
    hi = maximum_filter1d(limit, size=size, mode="nearest")
    lo = minimum_filter1d(limit, size=size, mode="nearest")
    dist = np.maximum(0.0, np.maximum(approx - hi, lo - approx))
    return float(dist.max())


def osl_seminorm(field: SpaceTimeField, t: float) -> float:
    """Discrete one-sided Lipschitz seminorm sup (b(x')-b(x))/(x'-x); for
    sampled 1-D data the supremum is attained on an adjacent node pair.
    May be negative (no flooring)."""
    row = _nearest_slice(field, t)
    if row.size < 2:
        raise ConfigError("need at least two nodes")
    return float(np.max(np.diff(row)) / field.grid.dx)


# ---------------------------------------------------------------------------
# Filippov integrator


@dataclass(frozen=True)
class FilippovPath:
    """Explicit Euler path(s) of the differential inclusion."""

    times: np.ndarray
    positions: np.ndarray  # (n_times,) or (n_times, n_starts)

    def first_time_within(self, target: float, tol: float) -> float | None:
        """First stored time with |X_t - target| <= tol (scalar paths)."""
        hit = np.nonzero(np.abs(self.positions - target) <= tol)[0]
        return float(self.times[hit[0]]) if hit.size else None


def filippov_solve(drift_field: SpaceTimeField, flux: FluxModel, k: float, x0,
                   s: float, final_time: float, dt: float) -> FilippovPath:
    """Integrate dX/dt in K[a_k(u)](X, t) from X_s = x0 up to final_time.

    The step velocity is 0 whenever 0 lies in the hull interval over the
    event-detection radius R = max(dx, sup|b| dt) at the current point
    (sticking), and the pointwise interpolated drift otherwise.  Paths are
    Lipschitz with constant sup|b| exactly.
    """
    if dt <= 0 or final_time < s:
        raise ConfigError("need dt > 0 and final_time >= s")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    scalar = np.isscalar(x0) or np.ndim(x0) == 0

    b = SpaceTimeField(drift_field.grid, drift_field.times,
                       drift_a_k(flux, drift_field.values, k))
    sup_b = float(np.max(np.abs(b.values)))
    radius = max(b.grid.dx, sup_b * dt)
    nodes = b.grid.nodes
    n_nodes = nodes.size

    n_steps = max(1, math.ceil((final_time - s) / dt - 1e-12)) if final_time > s else 0
    times = np.minimum(s + dt * np.arange(n_steps + 1), final_time)
    out = np.empty((n_steps + 1, x.size))
    out[0] = x

    tables: dict[int, _RangeExtrema] = {}
    for j in range(n_steps):
        t = times[j]
        step = times[j + 1] - times[j]
        sl = b.nearest_time_index(t)
        table = tables.get(sl)
        if table is None:
            table = tables[sl] = _RangeExtrema(b.values[sl])
        lo_i, hi_i = _window_bounds(b.grid, x, radius)
        lo_i = np.clip(lo_i, 0, n_nodes - 1)
        hi_i = np.clip(hi_i, 0, n_nodes - 1)
        hull_lo, hull_hi = table.query(lo_i, np.maximum(hi_i, lo_i))
        v = np.interp(x, nodes, b.values[sl])
        stick = (hull_lo <= 0.0) & (hull_hi >= 0.0)
        x = x + np.where(stick, 0.0, v) * step
        out[j + 1] = x

    positions = out[:, 0] if scalar else out
    return FilippovPath(times=times, positions=positions)


# ---------------------------------------------------------------------------
# Lemma verification: d_R <= sqrt(2 L(t) ||b_approx(t) - b_limit(t)||_1)


@dataclass(frozen=True)
class Lemma51Report:
    times: np.ndarray
    d_values: np.ndarray
    bounds: np.ndarray
    ratios: np.ndarray
    osl_violations: tuple[tuple[float, float, float], ...]  # (t, osl, allowed)
    max_ratio: float

    @property
    def ok(self) -> bool:
        return not self.osl_violations and self.max_ratio <= 1.0


def lemma51_check(b_approx: SpaceTimeField, b_limit: SpaceTimeField, l_bound,
                  radius: float, t_min: float = 0.0, osl_tol: float | None = None,
                  grid_tol: float = 1e-6) -> Lemma51Report:
    """Per-slice check of the square-root drift-distance bound.

    ``l_bound(t)`` is the one-sided Lipschitz envelope the approximating
    drift must satisfy (verified first, with slack ``osl_tol``; default
    5 dx, the same discrete slack the Oleinik check uses).  Ratios are
    d_R / (bound + grid_tol); slices with non-finite l_bound are skipped.
    """
    _check_compatible(b_approx, b_limit)
    grid = b_approx.grid
    if osl_tol is None:
        osl_tol = 5.0 * grid.dx
    times, d_vals, bounds, ratios = [], [], [], []
    violations = []
    for t in b_approx.times:
        t = float(t)
        if t < t_min:
            continue
        limit = float(l_bound(t))
        if not math.isfinite(limit):
            continue
        osl = osl_seminorm(b_approx, t)
        if osl > limit + osl_tol:
            violations.append((t, osl, limit + osl_tol))
            continue
        diff = np.abs(_nearest_slice(b_approx, t) - _nearest_slice(b_limit, t))
        l1 = float(np.trapezoid(diff, grid.nodes))
        d = d_R_distance(b_approx, b_limit, radius, t)
        bound = math.sqrt(2.0 * max(limit, 0.0) * l1)
        times.append(t)
        d_vals.append(d)
        bounds.append(bound)
        ratios.append(d / (bound + grid_tol))
    return Lemma51Report(
        times=np.asarray(times),
        d_values=np.asarray(d_vals),
        bounds=np.asarray(bounds),
        ratios=np.asarray(ratios),
        osl_violations=tuple(violations),
        max_ratio=float(np.max(ratios)) if ratios else 0.0,
    )
