"""Deterministic solvers for the viscous and inviscid conservation law.

Four routes to the same physics, used to cross-check each other:

* ``solve_viscous``    -- explicit finite differences for
  m_t + f(m)_x = (eps^2/2) m_xx (first-order upwind advection, central
  diffusion, forward Euler, Dirichlet boundaries),
* ``solve_entropy_reference`` -- Godunov scheme for the inviscid entropy
  solution,
* ``exact_riemann``    -- closed-form shock / rarefaction solutions for
  convex flux and two-state data,
* ``duhamel_solve``    -- Picard iteration of the heat-kernel fixed point
  m = K_t * u_in - int_0^t dK_{t-s} * f(m(s)) ds, an independent oracle
  for the viscous solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BoundaryContaminationError,
    ConfigError,
    DegenerateProblemError,
    FluxModel,
    Grid1D,
    InitialData,
    InstabilityError,
    NonContractionError,
    SpaceTimeField,
)


@dataclass(frozen=True)
class PdeScheme:
    """Discretization fixed by the numerical method; only the CFL safety
    factor and output thinning are tunable."""

    advection: str = "first-order-upwind"
    diffusion: str = "second-order-central"
    time: str = "forward-euler"
    cfl_safety: float = 0.4
    n_stored_times: int = 41
    boundary_tol: float = 1e-6

    def __post_init__(self) -> None:
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ConfigError("cfl_safety must lie in (0, 1]")
        if self.n_stored_times < 2:
            raise ConfigError("need at least two stored time slices")


def cfl_timestep(grid: Grid1D, flux: FluxModel, epsilon: float, sup_norm: float,
                 cfl_safety: float, final_time: float | None = None) -> float:
    """Stable explicit step: dt = safety * min(dx/max|f'|, dx^2/eps^2).

    When ``final_time`` is given the step is rounded down so that the run
    takes an integer number of steps.
    """
    amax = flux.max_abs_speed(sup_norm) if sup_norm > 0 else 0.0
    if amax == 0.0 and epsilon == 0.0:
        raise DegenerateProblemError("max|f'| = eps = 0: nothing evolves")
    dt_adv = grid.dx / amax if amax > 0 else math.inf
    dt_dif = grid.dx**2 / epsilon**2 if epsilon > 0 else math.inf
    dt = cfl_safety * min(dt_adv, dt_dif)
    if final_time is not None:
        n = max(1, math.ceil(final_time / dt - 1e-12))
        dt = final_time / n
    return dt


def _stored_step_indices(n_steps: int, n_stored: int) -> np.ndarray:
    idx = np.unique(np.rint(np.linspace(0, n_steps, n_stored)).astype(int))
    return idx


def _check_boundaries(row: np.ndarray, left: float, right: float, tol: float, t: float) -> None:
    if abs(row[1] - left) > tol or abs(row[-2] - right) > tol:
        raise BoundaryContaminationError(
            f"solution reached the boundary at t={t:.6g}: "
            f"|m(-L+dx)-u_in(-L)|={abs(row[1] - left):.3e}, "
            f"|m(L-dx)-u_in(L)|={abs(row[-2] - right):.3e} (tol {tol:g})"
        )


def solve_viscous(grid: Grid1D, flux: FluxModel, epsilon: float, u_in: InitialData,
                  final_time: float, scheme: PdeScheme = PdeScheme()) -> SpaceTimeField:
    """March m_t + f(m)_x = (eps^2/2) m_xx with Dirichlet data u_in(+-L).

    Upwinding is by the sign of the cell-local characteristic speed
    f'(m_i); the backward/forward flux difference is used accordingly.
    Raises ``BoundaryContaminationError`` if the profile reaches the
    boundary and ``InstabilityError`` on NaN/overflow.
    """
    x = grid.nodes
    m = np.asarray(u_in.evaluate(x), dtype=float).copy()
    left, right = float(m[0]), float(m[-1])
    dt = cfl_timestep(grid, flux, epsilon, u_in.sup_norm, scheme.cfl_safety, final_time)
    n_steps = int(round(final_time / dt))
    lam = dt / grid.dx
    mu = 0.5 * epsilon**2 * dt / grid.dx**2

    store = _stored_step_indices(n_steps, scheme.n_stored_times)
    stored_rows = [m.copy()] if store[0] == 0 else []
    stored_times = [0.0] if store[0] == 0 else []
    next_store = 1 if store[0] == 0 else 0

    adv = np.empty_like(m)
    for j in range(1, n_steps + 1):
        fm = flux.f(m)
        speed = flux.f_prime(m)
        dfb = np.empty_like(m)
        dfb[1:] = fm[1:] - fm[:-1]
        dfb[0] = 0.0
        dff = np.empty_like(m)
        dff[:-1] = fm[1:] - fm[:-1]
        dff[-1] = 0.0
        np.copyto(adv, np.where(speed >= 0.0, dfb, dff))
        new = m - lam * adv
        if mu > 0.0:
            new[1:-1] += mu * (m[2:] - 2.0 * m[1:-1] + m[:-2])
        new[0], new[-1] = left, right
        m = new
        if next_store < store.size and j == store[next_store]:
            if not np.all(np.isfinite(m)):
                raise InstabilityError(f"viscous solver produced NaN/overflow at step {j}")
            t = j * dt if j < n_steps else final_time
            _check_boundaries(m, left, right, scheme.boundary_tol, t)
            stored_rows.append(m.copy())
            stored_times.append(t)
            next_store += 1

    return SpaceTimeField(grid, np.asarray(stored_times), np.asarray(stored_rows))


def _godunov_flux(flux: FluxModel, omega: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # exact Riemann flux for convex f with sonic point omega
    return np.maximum(flux.f(np.maximum(a, omega)), flux.f(np.minimum(b, omega)))


#: Width constant of the sonic entropy fix (in units of dx/t); chosen so the
#: discrete rarefaction obeys the one-sided Lipschitz bound within O(dx).
SONIC_BAND = 6.0


def solve_entropy_reference(grid: Grid1D, flux: FluxModel, u_in: InitialData,
                            final_time: float, cfl_safety: float = 0.4,
                            n_stored_times: int = 41) -> SpaceTimeField:
    """Godunov approximation of the inviscid entropy solution.

    Plain Godunov leaves the classical sonic-point glitch in transonic
    rarefactions: an O(dx) kink whose one-sided slope stays near 3.6/t and
    never meets the Oleinik bound.  Interfaces inside the self-similar
    near-sonic band |f'| < SONIC_BAND dx/t therefore get Rusanov viscosity
    (capped at the monotone CFL limit).  Compressive fronts see no band
    interfaces, so shocks stay as sharp as plain Godunov's.
    """
    if not flux.is_strictly_convex:
        raise ConfigError("entropy reference requires a strictly convex flux")
    x = grid.nodes
    u = np.asarray(u_in.evaluate(x), dtype=float).copy()
    left, right = float(u[0]), float(u[-1])
    dt = cfl_timestep(grid, flux, 0.0, u_in.sup_norm, cfl_safety, final_time)
    n_steps = int(round(final_time / dt))
    lam = dt / grid.dx
    omega = flux.sonic_point(u_in.sup_norm)
    alpha_cap = 0.999 / lam

    store = _stored_step_indices(n_steps, n_stored_times)
    stored_rows = [u.copy()]
    stored_times = [0.0]
    next_store = 1

    for j in range(1, n_steps + 1):
        t = j * dt
        ul = np.concatenate(([left], u))
        ur = np.concatenate((u, [right]))
        flx = _godunov_flux(flux, omega, ul, ur)  # interface i-1/2 for i=0..n
        sa, sb = flux.f_prime(ul), flux.f_prime(ur)
        kappa = min(SONIC_BAND * grid.dx / t, alpha_cap)
        band = (sa < kappa) & (sb > -kappa) & (sb > sa)
        if np.any(band):
            alpha = np.minimum(np.maximum(np.maximum(np.abs(sa), np.abs(sb)), kappa),
                               alpha_cap)
            flx = np.where(band, 0.5 * (flux.f(ul) + flux.f(ur)) - 0.5 * alpha * (ur - ul),
                           flx)
        u = u - lam * (flx[1:] - flx[:-1])
        u[0], u[-1] = left, right
        if next_store < store.size and j == store[next_store]:
            if not np.all(np.isfinite(u)):
                raise InstabilityError(f"Godunov solver produced NaN/overflow at step {j}")
            stored_rows.append(u.copy())
            stored_times.append(t if j < n_steps else final_time)
            next_store += 1

    return SpaceTimeField(grid, np.asarray(stored_times), np.asarray(stored_rows))


def _fprime_inverse(flux: FluxModel, xi: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Solve f'(u) = xi for u in [lo, hi] by bisection (f' increasing)."""
    a = np.full_like(xi, lo)
    b = np.full_like(xi, hi)
    for _ in range(80):
        mid = 0.5 * (a + b)
        below = flux.f_prime(mid) < xi
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


def exact_riemann(flux: FluxModel, left: float, right: float, x, t: float,
                  jump: float = 0.0):
    """Entropy solution of the Riemann problem at (x, t), t > 0.

    Shock at the Rankine-Hugoniot speed for left > right, rarefaction fan
    u = (f')^{-1}((x - jump)/t) for left < right.
    """
    if t <= 0:
        raise ConfigError(f"exact_riemann needs t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    xi = (x - jump) / t
    if left == right:
        return np.full_like(xi, float(left))[()]
    if left > right:
        s = (flux.f(np.float64(left)) - flux.f(np.float64(right))) / (left - right)
        return np.where(xi < s, float(left), float(right))[()]
    sl = float(flux.f_prime(np.float64(left)))
    sr = float(flux.f_prime(np.float64(right)))
    fan = _fprime_inverse(flux, np.clip(xi, sl, sr), left, right)
    out = np.where(xi <= sl, float(left), np.where(xi >= sr, float(right), fan))
    return out[()]


def exact_riemann_field(grid: Grid1D, flux: FluxModel, u_in: InitialData,
                        times: np.ndarray) -> SpaceTimeField:
    """Exact Riemann solution sampled on (grid, times); t=0 rows are u_in."""
    if not u_in.is_riemann:
        raise ConfigError("exact_riemann_field needs riemann initial data")
    times = np.asarray(times, dtype=float)
    rows = np.empty((times.size, grid.n_points))
    for j, t in enumerate(times):
        if t <= 0:
            rows[j] = u_in.evaluate(grid.nodes)
        else:
            rows[j] = exact_riemann(flux, u_in.left, u_in.right, grid.nodes, t, u_in.jump)
    return SpaceTimeField(grid, times, rows)


# ---------------------------------------------------------------------------
# Duhamel / heat-kernel oracle

KERNEL_CUTOFF_SIGMAS = 8.0  # kernel mass beyond 8 sigma is < 1e-15


def heat_kernel_weights(dx: float, epsilon: float, tau: float) -> np.ndarray:
    """Sampled heat kernel K_tau on node offsets, normalized to unit sum."""
    sig = epsilon * math.sqrt(tau)
    w = max(1, int(math.ceil(KERNEL_CUTOFF_SIGMAS * sig / dx)))
    xs = np.arange(-w, w + 1) * dx
    k = np.exp(-xs**2 / (2.0 * sig * sig))
    return k / k.sum()


def grad_heat_kernel_weights(dx: float, epsilon: float, tau: float) -> np.ndarray:
    """Sampled dK_tau/dx on node offsets, trapezoid-weighted (* dx)."""
    sig = epsilon * math.sqrt(tau)
    w = max(1, int(math.ceil(KERNEL_CUTOFF_SIGMAS * sig / dx)))
    xs = np.arange(-w, w + 1) * dx
    k = -xs / (sig * sig) * np.exp(-xs**2 / (2.0 * sig * sig)) / math.sqrt(2.0 * math.pi * sig * sig)
    return k * dx


def convolve_const_ext(u: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """(weights * u)(x_i) with u extended constantly beyond the domain."""
    w = (weights.size - 1) // 2
    pad = np.concatenate((np.full(w, u[0]), u, np.full(w, u[-1])))
    return np.convolve(pad, weights, mode="valid")


def duhamel_solve(grid: Grid1D, flux: FluxModel, epsilon: float, u_in: InitialData,
                  final_time: float, n_picard: int = 30, n_time_slices: int = 64,
                  n_sigma: int = 48, tol: float = 1e-10) -> SpaceTimeField:
    """Fixed point of the Duhamel map by Picard iteration.

    The memory integral is evaluated after the substitution t - s = sigma^2,
    which removes the integrable kernel singularity at s = t, with trapezoid
    quadrature in sigma and linear interpolation of the previous iterate in
    time.  Raises ``NonContractionError`` when the iterate distance grows
    (the fixed-point map contracts only for small enough final_time).
    """
    if epsilon <= 0:
        raise ConfigError("duhamel_solve requires epsilon > 0")
    x = grid.nodes
    dx = grid.dx
    uin = np.asarray(u_in.evaluate(x), dtype=float)
    times = np.linspace(0.0, final_time, n_time_slices + 1)

    heat = np.empty((n_time_slices + 1, x.size))
    heat[0] = uin
    for j in range(1, n_time_slices + 1):
        heat[j] = convolve_const_ext(uin, heat_kernel_weights(dx, epsilon, times[j]))

    # per-slice sigma grids and gradient kernels, reused across iterations
    plans = []
    for j in range(1, n_time_slices + 1):
        tj = times[j]
        sq = math.sqrt(tj)
        sigmas = np.linspace(0.0, sq, n_sigma + 1)
        kernels = [grad_heat_kernel_weights(dx, epsilon, float(s * s)) for s in sigmas[1:]]
        plans.append((tj, sq, sigmas, kernels))

    m = heat.copy()
    prev_delta = math.inf
    for _ in range(n_picard):
        fm = flux.f(m)
        new = heat.copy()
        for j, (tj, sq, sigmas, kernels) in enumerate(plans, start=1):
            acc = np.zeros_like(x)
            h = sq / n_sigma
            for q in range(1, n_sigma + 1):
                s = tj - sigmas[q] ** 2
                pos = s / final_time * n_time_slices
                j0 = min(int(pos), n_time_slices - 1)
                wt = pos - j0
                fs = (1.0 - wt) * fm[j0] + wt * fm[j0 + 1]
                weight = h if q < n_sigma else 0.5 * h  # trapezoid; sigma=0 term vanishes
                acc += weight * 2.0 * sigmas[q] * convolve_const_ext(fs, kernels[q - 1])
            new[j] -= acc
        delta = float(np.max(np.abs(new - m)))
        m = new
        if not math.isfinite(delta):
            raise InstabilityError("Duhamel iteration produced NaN/overflow")
        if delta < tol:
            break
        if delta > prev_delta:
            raise NonContractionError(
                f"Picard iteration not contracting (delta {prev_delta:.3e} -> {delta:.3e}); "
                "reduce final_time"
            )
        prev_delta = delta

    return SpaceTimeField(grid, times, m)
