from __future__ import annotations

import math

import numpy as np
import pytest

from mfscl.core import ConfigError, InstabilityError, MonotonicityError, constant_field, make_grid
from mfscl.pde import exact_riemann_field, solve_viscous
from mfscl.core import drift_a
from mfscl.sde import (
    BrownianBundle,
    ParticleEnsemble,
    evolve_flow,
    identity_transform,
    interp_drift,
    invert_flow,
    make_brownian,
    standard_normals,
)


@pytest.fixture(scope="module")
def times5():
    return np.linspace(0.0, 1.0, 5)


class TestBrownian:
    def test_regeneration_bit_identical(self):
        a = make_brownian(123, 7, 500, 1e-3)
        b = make_brownian(123, 7, 500, 1e-3)
        assert np.array_equal(a.increments, b.increments)

    def test_distinct_samples_decorrelated(self):
        a = make_brownian(123, 0, 4000, 1e-3).increments
        b = make_brownian(123, 1, 4000, 1e-3).increments
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 0.1

    def test_distinct_seeds_differ(self):
        a = make_brownian(1, 0, 64, 1e-3)
        b = make_brownian(2, 0, 64, 1e-3)
        assert not np.array_equal(a.increments, b.increments)

    def test_bad_arguments_rejected(self):
        with pytest.raises(ConfigError):
            make_brownian(1, 0, 0, 1e-3)
        with pytest.raises(ConfigError):
            make_brownian(1, 0, 10, 0.0)

    def test_increment_scale(self):
        # sample mean of the increments stays inside a 5-sigma band
        n, dt = 4000, 2.5e-4
        inc = make_brownian(42, 3, n, dt).increments
        assert abs(inc.mean()) <= 5.0 * math.sqrt(dt / n)
        assert inc.std() == pytest.approx(math.sqrt(dt), rel=0.1)

    def test_mean_square_displacement(self):
        # with zero drift all particles share W, so average over many
        # Monte Carlo samples: E[W_T^2] = eps^2 T within 10%
        n_steps, dt, n_mc = 1000, 1e-3, 2000
        total = 0.0
        for s in range(n_mc):
            z = standard_normals(7, s, n_steps)
            total += (z.sum() * math.sqrt(dt)) ** 2
        msd = total / n_mc
        assert msd == pytest.approx(1.0 * n_steps * dt, rel=0.10)

    def test_path_starts_at_zero(self):
        b = make_brownian(5, 0, 16, 0.25)
        w = b.path()
        assert w[0] == 0.0 and w.size == 17


class TestInterpDrift:
    def test_reproduces_nodes(self, desk_grid, times5):
        rng = np.random.default_rng(0)
        fld = constant_field(desk_grid, times5, 0.0).map_values(
            lambda v: v + rng.normal(size=v.shape))
        j, i = 2, 17
        assert interp_drift(fld, desk_grid.nodes[i], times5[j]) == fld.values[j, i]

    def test_linear_field_exact_midpoints(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 0.0).map_values(
            lambda v: v + desk_grid.nodes[None, :] * 3.0)
        x = 0.5 * (desk_grid.nodes[10] + desk_grid.nodes[11])
        assert interp_drift(fld, x, 0.3) == pytest.approx(3.0 * x)

    def test_time_interpolation(self, desk_grid, times5):
        ramp = np.outer(times5, np.ones(desk_grid.n_points))
        fld = constant_field(desk_grid, times5, 0.0).map_values(lambda v: v + ramp)
        assert interp_drift(fld, 0.0, 0.625) == pytest.approx(0.625)

    def test_clamps_outside_domain(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 0.0).map_values(
            lambda v: v + desk_grid.nodes[None, :])
        assert interp_drift(fld, desk_grid.half_length + 1.0, 0.5) == desk_grid.half_length

    def test_time_out_of_range_rejected(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 1.0)
        with pytest.raises(ConfigError):
            interp_drift(fld, 0.0, 1.5)
        with pytest.raises(ConfigError):
            interp_drift(fld, 0.0, -0.2)


class TestEvolveFlow:
    def test_zero_drift_is_translated_brownian(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 0.0)
        bundle = make_brownian(11, 0, 1000, 1e-3)
        seeds = np.linspace(-6, 6, 101)
        ens = evolve_flow(fld, identity_transform, seeds, 1.0, bundle)
        w = bundle.path()
        assert np.allclose(ens.positions[-1], seeds + w[-1], atol=1e-12)
        # every particle shares the same displacement
        disp = ens.positions[-1] - seeds
        assert np.max(disp) - np.min(disp) < 1e-12

    def test_constant_drift_exact(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 2.0)
        bundle = make_brownian(11, 0, 200, 5e-3)
        seeds = np.linspace(-3, 3, 11)
        ens = evolve_flow(fld, identity_transform, seeds, 0.0, bundle)
        assert np.allclose(ens.positions[-1], seeds + 2.0, atol=1e-12)

    def test_common_noise_coupling(self, desk_grid, times5, flux):
        fld = constant_field(desk_grid, times5, 0.4)
        bundle = make_brownian(3, 5, 400, 2.5e-3)
        seeds = np.linspace(-2, 2, 21)
        a = evolve_flow(fld, identity_transform, seeds, 0.7, bundle)
        b = evolve_flow(fld, identity_transform, seeds, 0.7, bundle)
        assert np.array_equal(a.positions, b.positions)

    def test_zero_noise_ignores_bundle(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 0.4)
        seeds = np.linspace(-2, 2, 21)
        a = evolve_flow(fld, identity_transform, seeds, 0.0, make_brownian(1, 0, 100, 1e-2))
        b = evolve_flow(fld, identity_transform, seeds, 0.0, make_brownian(9, 4, 100, 1e-2))
        assert np.array_equal(a.positions, b.positions)

    def test_horizon_mismatch_rejected(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 0.0)
        bundle = make_brownian(1, 0, 100, 1e-2)  # horizon 1.0 ok
        evolve_flow(fld, identity_transform, np.array([0.0, 1.0]), 0.0, bundle)
        with pytest.raises(ConfigError):
            evolve_flow(fld, identity_transform, np.array([0.0, 1.0]), 0.0,
                        make_brownian(1, 0, 150, 1e-2))

    def test_instability_detected(self, desk_grid, times5):
        huge = constant_field(desk_grid, times5, 1e308)
        bundle = make_brownian(1, 0, 10, 0.1)
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(InstabilityError):
            evolve_flow(huge, lambda v: v * 1e6, np.array([0.0, 1.0]), 0.0, bundle)

    def test_monotone_for_positive_noise(self, flux, desk_grid, compressive):
        fld = solve_viscous(desk_grid, flux, 1.0, compressive, 1.0)
        bundle = make_brownian(0, 0, 1000, 1e-3)
        seeds = np.linspace(-6, 6, 501)
        ens = evolve_flow(fld, lambda v: drift_a(flux, v), seeds, 1.0, bundle,
                          store_stride=25)
        assert ens.monotone
        assert np.all(np.diff(ens.positions, axis=1) > 0)

    def test_zero_noise_merging_at_shock(self, flux, desk_grid, compressive):
        # drift a(u) of the stationary shock: particle from 0.5 reaches the
        # shock at t = 2 * 0.5 = 1.0 and sticks (merged characteristics)
        times = np.linspace(0.0, 2.0, 9)
        fld = exact_riemann_field(desk_grid, flux, compressive, times)
        bundle = make_brownian(0, 0, 2000, 1e-3)
        seeds = np.array([-0.5, -0.25, 0.25, 0.5])
        ens = evolve_flow(fld, lambda v: drift_a(flux, v), seeds, 0.0, bundle)
        tol = desk_grid.dx + 1e-3
        # by t slightly after 1.0 every probe has collapsed onto the shock
        j = int(np.searchsorted(ens.times, 1.0 + 5 * tol))
        assert np.max(np.abs(ens.positions[j])) <= tol
        assert np.all(np.diff(ens.positions[j]) >= 0.0)

    def test_store_stride_thinning(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 0.0)
        bundle = make_brownian(2, 0, 100, 1e-2)
        ens = evolve_flow(fld, identity_transform, np.array([0.0]), 1.0, bundle,
                          store_stride=30)
        assert ens.times[0] == 0.0 and ens.times[-1] == pytest.approx(1.0)
        assert ens.positions.shape[0] == ens.times.size


class TestInvertFlow:
    def test_identity_flow(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 0.0)
        bundle = make_brownian(1, 0, 50, 2e-2)
        seeds = np.linspace(-6, 6, 201)
        ens = evolve_flow(fld, identity_transform, seeds, 0.0, bundle)
        q = np.array([-2.3, 0.11, 4.9])
        assert np.allclose(invert_flow(ens, -1, q), q, atol=1e-12)

    def test_translation_flow(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 1.5)
        bundle = make_brownian(1, 0, 50, 2e-2)
        seeds = np.linspace(-6, 6, 201)
        ens = evolve_flow(fld, identity_transform, seeds, 0.0, bundle)
        assert invert_flow(ens, -1, 0.25) == pytest.approx(0.25 - 1.5, abs=1e-10)

    def test_roundtrip_within_seed_spacing(self, flux, desk_grid, compressive):
        fld = solve_viscous(desk_grid, flux, 0.5, compressive, 0.5)
        bundle = make_brownian(4, 2, 500, 1e-3)
        seeds = np.linspace(-6, 6, 401)
        ens = evolve_flow(fld, identity_transform, seeds, 0.5, bundle)
        rng = np.random.default_rng(1)
        q = rng.uniform(ens.positions[-1][0], ens.positions[-1][-1], size=64)
        labels = invert_flow(ens, -1, q)
        forward = np.interp(labels, seeds, ens.positions[-1])
        dx_seed = seeds[1] - seeds[0]
        assert np.max(np.abs(forward - q)) <= dx_seed

    def test_clamps_outside_hull(self, desk_grid, times5):
        fld = constant_field(desk_grid, times5, 0.0)
        bundle = make_brownian(1, 0, 50, 2e-2)
        seeds = np.linspace(-1, 1, 11)
        ens = evolve_flow(fld, identity_transform, seeds, 0.0, bundle)
        assert invert_flow(ens, -1, 99.0) == seeds[-1]

    def test_monotonicity_error_names_pair(self):
        crossed = np.array([[0.0, 1.0, 2.0], [0.0, 2.0, 1.5]])
        ens = ParticleEnsemble(
            initial_positions=np.array([0.0, 1.0, 2.0]),
            times=np.array([0.0, 1.0]),
            positions=crossed,
            epsilon=0.3,
        )
        with pytest.raises(MonotonicityError, match="particles 1 and 2"):
            invert_flow(ens, 1, 0.5)
