"""Brownian bundles and Euler-Maruyama particle flows.

One Brownian path drives *all* particles of a Monte Carlo sample (common
transport noise); distinct samples get independent paths.  Increments are
produced by a counter-based generator (Philox4x64 keyed by
(seed, sample_index)) whose uniform output is mapped through the exact
inverse normal CDF (scipy.special.ndtri, Cephes), so regeneration is
bit-identical regardless of execution order or thread count.

The two flows of interest share this machinery and differ only in the
drift transform applied to the interpolated mean field m:

    X-flow: dX = a(m(X, t)) dt + eps dW      (pushforward solution)
    Y-flow: dY = m(Y, t) dt + eps dW         (backward-label comparison)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .core import (
    ConfigError,
    InstabilityError,
    MonotonicityError,
    SpaceTimeField,
    _readonly,
)

_TWO_POW_MINUS_53 = 2.0**-53


@dataclass(frozen=True)
class BrownianBundle:
    """Deterministic function of (seed, sample_index): N(0, dt) increments."""

    seed: int
    sample_index: int
    n_steps: int
    dt: float
    increments: np.ndarray = field(repr=False)

    def path(self) -> np.ndarray:
        """W at times 0, dt, ..., n_steps*dt (starts at 0)."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))


def standard_normals(seed: int, sample_index: int, n: int) -> np.ndarray:
    """n unit normals from the counter-addressed stream (seed, sample_index)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(sample_index & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(n)
    # uniforms strictly inside (0, 1): 53-bit mantissa, half-ulp offset
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_MINUS_53
    return ndtri(u)


def make_brownian(seed: int, sample_index: int, n_steps: int, dt: float) -> BrownianBundle:
    if n_steps <= 0:
        raise ConfigError(f"n_steps must be positive, got {n_steps}")
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    z = standard_normals(seed, sample_index, n_steps)
    return BrownianBundle(seed, sample_index, n_steps, float(dt),
                          _readonly(z * math.sqrt(dt)))


# ---------------------------------------------------------------------------
# drift interpolation


def _time_bracket(times: np.ndarray, t: float) -> tuple[int, float]:
    slack = 1e-9 * max(1.0, abs(times[-1]))
    if t < times[0] - slack or t > times[-1] + slack:
        raise ConfigError(f"time {t!r} outside stored range [{times[0]}, {times[-1]}]")
    t = min(max(t, times[0]), times[-1])
    j = int(np.searchsorted(times, t, side="right") - 1)
    j = min(max(j, 0), times.size - 2)
    w = (t - times[j]) / (times[j + 1] - times[j])
    return j, float(min(max(w, 0.0), 1.0))


def interp_drift(field: SpaceTimeField, x, t: float):
    """Bilinear space-time interpolation; x outside [-L, L] clamps to the
    boundary value of the nearest endpoint at that time."""
    if field.times.size == 1:
        row = field.values[0]
    else:
        j, w = _time_bracket(field.times, t)
        row = (1.0 - w) * field.values[j] + w * field.values[j + 1]
    return np.interp(np.asarray(x, dtype=float), field.grid.nodes, row)[()]


# ---------------------------------------------------------------------------
# particle flows


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle positions along a flow, stored at thinned times.

    ``positions[j, p]`` is particle p at ``times[j]``; row 0 is the initial
    seeding.  ``violations`` lists (time_index, particle_index) pairs where
    strict monotonicity first failed at a stored time (flagged, never
    silently repaired; for eps = 0 colliding particles are merged instead
    and no violation is recorded).
    """

    initial_positions: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    epsilon: float
    violations: tuple[tuple[int, int], ...] = ()

    @property
    def monotone(self) -> bool:
        return not self.violations

    @property
    def n_particles(self) -> int:
        return self.initial_positions.size


def _blend_plan(field_times: np.ndarray, step_times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-step bracket indices and weights into the stored PDE slices."""
    j = np.searchsorted(field_times, step_times, side="right") - 1
    j = np.clip(j, 0, field_times.size - 2)
    w = (step_times - field_times[j]) / (field_times[j + 1] - field_times[j])
    return j, np.clip(w, 0.0, 1.0)


def evolve_flow(drift_field: SpaceTimeField, drift_transform, ensemble_init: np.ndarray,
                epsilon: float, bundle: BrownianBundle, store_stride: int = 1) -> ParticleEnsemble:
    """Euler-Maruyama: x += transform(m(x, t)) dt + eps dW, one shared dW
    per step for all particles.

    ``drift_transform`` maps interpolated field values to velocities (the
    drift a(.) for X-flows, identity for Y-flows); it is applied after
    interpolation.  At eps = 0 colliding particles are merged to a common
    position (running maximum), mirroring characteristic merging at shocks.
    """
    horizon = bundle.n_steps * bundle.dt
    if not math.isclose(horizon, drift_field.final_time, rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigError(
            f"bundle horizon {horizon!r} does not match field final time "
            f"{drift_field.final_time!r}"
        )
    init = np.asarray(ensemble_init, dtype=float)
    pos = init.copy()
    dt = bundle.dt
    nodes = drift_field.grid.nodes
    step_times = dt * np.arange(bundle.n_steps)
    jbr, wbr = _blend_plan(drift_field.times, step_times)

    stored = [pos.copy()]
    stored_t = [0.0]
    violations: list[tuple[int, int]] = []

    def record(j_step: int, p: np.ndarray, t: float) -> None:
        if not np.all(np.isfinite(p)):
            raise InstabilityError(f"flow produced NaN/overflow at step {j_step}")
        if epsilon > 0 and p.size > 1:
            bad = np.nonzero(np.diff(p) <= 0.0)[0]
            if bad.size:
                violations.append((len(stored), int(bad[0])))
        stored.append(p.copy())
        stored_t.append(t)

    for j in range(bundle.n_steps):
        row = (1.0 - wbr[j]) * drift_field.values[jbr[j]] + wbr[j] * drift_field.values[jbr[j] + 1]
        v = drift_transform(np.interp(pos, nodes, row))
        pos = pos + v * dt + epsilon * bundle.increments[j]
        if epsilon == 0.0 and pos.size > 1:
            np.maximum.accumulate(pos, out=pos)
        j1 = j + 1
        if j1 == bundle.n_steps:
            record(j1, pos, horizon)
        elif j1 % store_stride == 0:
            record(j1, pos, j1 * dt)

    return ParticleEnsemble(
        initial_positions=_readonly(init),
        times=_readonly(np.asarray(stored_t)),
        positions=_readonly(np.asarray(stored)),
        epsilon=float(epsilon),
        violations=tuple(violations),
    )


def identity_transform(v: np.ndarray) -> np.ndarray:
    return v


def invert_flow(ensemble: ParticleEnsemble, time_index: int, query):
    """Initial label whose forward image lands on ``query`` (piecewise
    linear inverse of the monotone particle map); queries outside the
    particle hull clamp to the end labels."""
    y = ensemble.positions[time_index]
    d = np.diff(y)
    if ensemble.epsilon > 0:
        bad = np.nonzero(d <= 0.0)[0]
    else:
        bad = np.nonzero(d < 0.0)[0]  # exact ties are merged particles
    if bad.size:
        p = int(bad[0])
        raise MonotonicityError(
            f"positions not increasing at stored index {time_index}: "
            f"particles {p} and {p + 1} ({y[p]!r} >= {y[p + 1]!r})"
        )
    return np.interp(np.asarray(query, dtype=float), y, ensemble.initial_positions)[()]
