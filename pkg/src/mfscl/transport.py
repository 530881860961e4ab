"""Reconstruction of stochastic solutions from particle flows.

The pushforward solution u = (X_t)_# u_in is carried as signed point
masses on particle positions: particle p keeps its initial mass
u_in(x_p) * w_p forever (w_p are trapezoid weights on the seed grid), and
its density value is the initial density scaled by the centered
initial/final spacing ratio.  The composition solution v = u_in(Y_0) is
read off by inverting the forward flow, and the k-shifted representation
u(t) = k + (X^k_t)_#(u_in - k) is evaluated with Filippov characteristics.
"""

from __future__ import annotations

import numpy as np

from .core import (
    FluxModel,
    Grid1D,
    InitialData,
    MonotonicityError,
    SpaceTimeField,
    TestFunction,
    _readonly,
    drift_a_k,
)
from .filippov import filippov_solve
from .sde import ParticleEnsemble, invert_flow

from dataclasses import dataclass, replace

#: Merged point masses are displayed as densities over this fraction of
#: the seed spacing.
MERGE_FLOOR_FRACTION = 0.1


def seed_weights(seeds: np.ndarray) -> np.ndarray:
    """Trapezoid quadrature weights on the (possibly nonuniform) seed grid."""
    if seeds.size == 1:
        return np.ones(1)  # degenerate single-particle run: unit point mass
    w = np.empty_like(seeds)
    w[1:-1] = 0.5 * (seeds[2:] - seeds[:-2])
    w[0] = 0.5 * (seeds[1] - seeds[0])
    w[-1] = 0.5 * (seeds[-1] - seeds[-2])
    return w


@dataclass(frozen=True)
class DensitySample:
    """Pushforward density at one time: signed masses on carrier positions."""

    carrier_positions: np.ndarray
    carrier_values: np.ndarray
    carrier_masses: np.ndarray
    seed_positions: np.ndarray
    total_mass: float
    time: float
    grid_resampled: np.ndarray | None = None

    def weak_integral(self, theta: TestFunction) -> float:
        """Quadrature of int theta(x) u(x) dx via carrier masses; this is the
        discrete right-hand side of the pushforward identity."""
        return float(np.sum(theta(self.carrier_positions) * self.carrier_masses))

    def end_displacements(self) -> tuple[float, float]:
        """How far the first/last carrier moved from its seed."""
        return (
            float(self.carrier_positions[0] - self.seed_positions[0]),
            float(self.carrier_positions[-1] - self.seed_positions[-1]),
        )


def pushforward_density(u_in: InitialData, ensemble: ParticleEnsemble,
                        time_index: int) -> DensitySample:
    """Density carried by the flow at ``times[time_index]``.

    Carrier value at particle p is u_in(x_p) times the centered spacing
    ratio (x_{p+1}-x_{p-1}) / (X_{p+1}-X_{p-1}); one-sided at the ends.
    With eps > 0 a vanishing final spacing is a hard error; at eps = 0
    merged particles aggregate their signed masses at the merge point and
    display them over a floor spacing.
    """
    seeds = ensemble.initial_positions
    y = ensemble.positions[time_index]
    u0 = np.atleast_1d(np.asarray(u_in.evaluate(seeds), dtype=float))
    w = seed_weights(seeds)
    masses = u0 * w
    if seeds.size == 1:
        return DensitySample(
            carrier_positions=_readonly(y), carrier_values=_readonly(u0),
            carrier_masses=_readonly(masses), seed_positions=seeds,
            total_mass=float(masses.sum()), time=float(ensemble.times[time_index]),
        )

    span_x = np.empty_like(seeds)
    span_x[1:-1] = seeds[2:] - seeds[:-2]
    span_x[0] = seeds[1] - seeds[0]
    span_x[-1] = seeds[-1] - seeds[-2]
    span_y = np.empty_like(y)
    span_y[1:-1] = y[2:] - y[:-2]
    span_y[0] = y[1] - y[0]
    span_y[-1] = y[-1] - y[-2]

    degenerate = span_y <= 0.0
    if ensemble.epsilon > 0 and np.any(degenerate):
        p = int(np.nonzero(degenerate)[0][0])
        raise MonotonicityError(
            f"zero final spacing around particle {p} at stored index {time_index} "
            f"with eps > 0"
        )

    values = np.divide(u0 * span_x, span_y, out=np.zeros_like(y), where=~degenerate)

    if np.any(degenerate):
        # eps = 0: merged blocks (exact position ties) become point masses
        floor = MERGE_FLOOR_FRACTION * float(np.mean(np.diff(seeds)))
        block = np.concatenate(([0], np.cumsum(np.diff(y) > 0.0)))
        block_mass = np.bincount(block, weights=masses)
        block_size = np.bincount(block)
        merged_blocks = np.nonzero(block_size > 1)[0]
        merged = np.isin(block, merged_blocks)
        values[merged] = (block_mass / floor)[block[merged]]

    return DensitySample(
        carrier_positions=_readonly(y),
        carrier_values=_readonly(values),
        carrier_masses=_readonly(masses),
        seed_positions=seeds,
        total_mass=float(np.sum(masses)),
        time=float(ensemble.times[time_index]),
    )


def resample_to_grid(sample: DensitySample, grid: Grid1D) -> np.ndarray:
    """Piecewise-linear interpolation of carrier values onto grid nodes;
    nodes outside the carrier hull take the nearest end value."""
    y = sample.carrier_positions
    v = sample.carrier_values
    if np.any(np.diff(y) <= 0.0):
        keep = np.concatenate(([True], np.diff(y) > 0.0))
        y, v = y[keep], v[keep]
    return np.interp(grid.nodes, y, v)


def with_resampling(sample: DensitySample, grid: Grid1D) -> DensitySample:
    return replace(sample, grid_resampled=_readonly(resample_to_grid(sample, grid)))


def compose_solution(u_in: InitialData, ensemble_y: ParticleEnsemble, time_index: int,
                     grid: Grid1D) -> np.ndarray:
    """Composition solution v(x_i) = u_in(Y_0(x_i, t)) on the grid nodes."""
    labels = invert_flow(ensemble_y, time_index, grid.nodes)
    return np.asarray(u_in.evaluate(labels), dtype=float)


def representation_k(u_in: InitialData, flux: FluxModel, k: float,
                     entropy_field: SpaceTimeField, t: float, test_fn: TestFunction,
                     n_particles: int = 2001, dt: float | None = None) -> float:
    """Evaluate int theta u(., t) through u(t) = k + (X^k_t)_#(u_in - k).

    X^k is the Filippov flow for the drift a_k(u(., .)).  All integrals are
    restricted to the window [-L, L]: theta is treated as theta * 1_[-L,L],
    so the pushforward side integrates over the preimage of [-L, L], which
    keeps the identity exact on the finite domain.  The result is
    independent of k up to O(dx + dt).
    """
    grid = entropy_field.grid
    half = grid.half_length
    if dt is None:
        dt = t / max(200, int(round(t / (0.5 * grid.dx))))

    b_max = float(np.max(np.abs(drift_a_k(flux, entropy_field.values, k))))
    pad = b_max * t + 2.0 * grid.dx
    seeds = np.linspace(-half - pad, half + pad, n_particles)
    w = seed_weights(seeds)

    path = filippov_solve(entropy_field, flux, k, seeds, 0.0, t, dt)
    final = path.positions[-1]
    inside = (final >= -half) & (final <= half)

    if test_fn.antiderivative is not None:
        theta_int = float(test_fn.antiderivative(np.float64(half))
                          - test_fn.antiderivative(np.float64(-half)))
    else:
        theta_int = float(np.trapezoid(test_fn(grid.nodes), grid.nodes))

    u0 = np.asarray(u_in.evaluate(seeds), dtype=float)
    push = float(np.sum(test_fn(final[inside]) * (u0[inside] - k) * w[inside]))
    return k * theta_int + push
