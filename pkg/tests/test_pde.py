from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import erf

from mfscl.core import (
    ConfigError,
    DegenerateProblemError,
    BoundaryContaminationError,
    FluxModel,
    NonContractionError,
    make_grid,
    riemann_initial,
    sampled_initial,
)
from mfscl.pde import (
    PdeScheme,
    cfl_timestep,
    duhamel_solve,
    exact_riemann,
    exact_riemann_field,
    solve_entropy_reference,
    solve_viscous,
)
from mfscl.filippov import osl_seminorm


def zero_flux() -> FluxModel:
    return FluxModel("zero", f=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                     f_prime=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                     f_double_prime=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                     is_strictly_convex=False)


def heat_step_profile(x, t, eps, left=1.0, right=-1.0):
    """Exact pure-heat evolution of a step: scaled error function."""
    mid = 0.5 * (left + right)
    amp = 0.5 * (right - left)
    return mid + amp * erf(x / (eps * math.sqrt(2.0 * t)))


class TestCflTimestep:
    def test_advection_limited(self, flux):
        grid = make_grid(6.0, 1201)
        dt = cfl_timestep(grid, flux, 0.0, 1.0, 0.5)
        assert dt == pytest.approx(0.005)

    def test_diffusion_limited(self, flux):
        grid = make_grid(6.0, 1201)
        dt = cfl_timestep(grid, flux, 1.0, 1.0, 0.5)
        assert dt == pytest.approx(0.5 * min(0.01, 0.0001))

    def test_degenerate_rejected(self):
        grid = make_grid(6.0, 1201)
        with pytest.raises(DegenerateProblemError):
            cfl_timestep(grid, zero_flux(), 0.0, 1.0, 0.5)

    def test_rounding_gives_integer_steps(self, flux):
        grid = make_grid(6.0, 301)
        dt = cfl_timestep(grid, flux, 0.5, 1.0, 0.4, final_time=1.0)
        n = 1.0 / dt
        assert abs(n - round(n)) < 1e-9
        assert dt <= 0.4 * min(grid.dx, grid.dx**2 / 0.25) + 1e-15


class TestSolveViscous:
    def test_constants_are_exact(self, flux, desk_grid):
        u_in = riemann_initial(0.7, 0.7)
        fld = solve_viscous(desk_grid, flux, 0.5, u_in, 0.5)
        assert np.max(np.abs(fld.values - 0.7)) < 1e-13

    def test_inviscid_compressive_stays_sharp(self, flux, desk_grid, compressive):
        # eps = 0: stationary shock, u(t) = u_in away from O(dx) smearing
        fld = solve_viscous(desk_grid, flux, 0.0, compressive, 1.0)
        x = desk_grid.nodes
        away = np.abs(x) > 5 * desk_grid.dx
        assert np.max(np.abs(fld.values[-1][away] - compressive.evaluate(x[away]))) < 1e-9

    def test_steady_profile_oracle(self, flux):
        # independent oracle first: m = -tanh(x / eps^2) satisfies the steady
        # equation m m_x = (eps^2/2) m_xx (checked by central differences) ...
        eps = 0.5

        def steady_residual(delta, n):
            x = np.linspace(-2, 2, n)
            h = x[1] - x[0]
            m = -np.tanh(x / delta)
            mx = (m[2:] - m[:-2]) / (2 * h)
            mxx = (m[2:] - 2 * m[1:-1] + m[:-2]) / h**2
            return np.max(np.abs(m[1:-1] * mx - 0.5 * eps**2 * mxx))

        # residual is pure truncation (O(h^2)) for delta = eps^2 ...
        assert steady_residual(eps**2, 2001) < 1e-4
        assert steady_residual(eps**2, 2001) / steady_residual(eps**2, 4001) > 3.0
        # ... and O(1) for a wrong layer width
        assert steady_residual(eps, 2001) > 0.1
        # ... then the solver approaches that profile (refined run in acceptance)
        grid = make_grid(6.0, 601)
        fld = solve_viscous(grid, flux, eps, riemann_initial(1.0, -1.0), 4.0,
                            PdeScheme(n_stored_times=5))
        ref = -np.tanh(grid.nodes / eps**2)
        err = np.max(np.abs(fld.values[-1][1:-1] - ref[1:-1]))
        assert err < 0.05

    def test_first_order_refinement(self, flux, compressive):
        # halving dx reduces the L1 distance between consecutive refinements
        # by >= 1.5 (first-order scheme)
        fields = {}
        for n in (301, 601, 1201):
            grid = make_grid(6.0, n)
            fields[n] = solve_viscous(grid, flux, 0.5, compressive, 0.5,
                                      PdeScheme(n_stored_times=3))
        x0 = fields[301].grid.nodes
        d1 = np.trapezoid(np.abs(fields[301].values[-1] - fields[601].values[-1][::2]), x0)
        d2 = np.trapezoid(np.abs(fields[601].values[-1][::2] - fields[1201].values[-1][::4]), x0)
        assert d1 / d2 >= 1.5

    def test_monotone_data_stays_monotone(self, flux, desk_grid, expansive):
        fld = solve_viscous(desk_grid, flux, 0.5, expansive, 1.0)
        assert np.all(np.diff(fld.values, axis=1) >= -1e-12)

    def test_max_principle(self, flux, desk_grid, compressive):
        for eps in (0.0, 1.0 / 3.0, 1.0):
            fld = solve_viscous(desk_grid, flux, eps, compressive, 1.0)
            assert np.max(np.abs(fld.values)) <= 1.0 + 1e-10

    def test_boundary_contamination_detected(self, flux, compressive):
        grid = make_grid(1.2, 61)
        with pytest.raises(BoundaryContaminationError):
            solve_viscous(grid, flux, 1.0, compressive, 1.0)


class TestEntropyReference:
    def test_compressive_stationary_shock(self, flux, desk_grid, compressive):
        fld = solve_entropy_reference(desk_grid, flux, compressive, 1.0)
        exact = compressive.evaluate(desk_grid.nodes)
        assert np.max(np.abs(fld.values[-1] - exact)) == 0.0

    def test_expansive_rarefaction(self, flux, desk_grid, expansive):
        fld = solve_entropy_reference(desk_grid, flux, expansive, 1.0)
        exact = exact_riemann(flux, -1.0, 1.0, desk_grid.nodes, 1.0)
        l1 = np.trapezoid(np.abs(fld.values[-1] - exact), desk_grid.nodes)
        assert l1 < 0.25

    def test_refinement_toward_exact(self, flux, expansive):
        errs = []
        for n in (301, 601):
            grid = make_grid(6.0, n)
            fld = solve_entropy_reference(grid, flux, expansive, 1.0, n_stored_times=3)
            exact = exact_riemann(flux, -1.0, 1.0, grid.nodes, 1.0)
            errs.append(np.trapezoid(np.abs(fld.values[-1] - exact), grid.nodes))
        assert errs[0] / errs[1] >= 1.5

    def test_constant_data(self, flux, desk_grid):
        fld = solve_entropy_reference(desk_grid, flux, riemann_initial(0.3, 0.3), 1.0)
        assert np.max(np.abs(fld.values - 0.3)) < 1e-13

    @pytest.mark.parametrize("initial", ["compressive", "expansive"])
    def test_discrete_oleinik_bound(self, flux, desk_grid, compressive, expansive, initial):
        u_in = compressive if initial == "compressive" else expansive
        fld = solve_entropy_reference(desk_grid, flux, u_in, 1.0)
        for j, t in enumerate(fld.times):
            if t < 0.1:
                continue
            assert osl_seminorm(fld, float(t)) <= 1.0 / t + 5 * desk_grid.dx


class TestExactRiemann:
    def test_stationary_shock(self, flux):
        assert exact_riemann(flux, 1.0, -1.0, -0.3, 2.0) == 1.0
        assert exact_riemann(flux, 1.0, -1.0, 0.3, 2.0) == -1.0

    def test_moving_shock_speed(self, flux):
        # Rankine-Hugoniot: s = (f(l) - f(r)) / (l - r) = 1/2 for (1, 0)
        x = np.array([0.49, 0.51])
        vals = exact_riemann(flux, 1.0, 0.0, x, 1.0)
        assert vals[0] == 1.0 and vals[1] == 0.0

    def test_rarefaction_fan(self, flux):
        assert exact_riemann(flux, -1.0, 1.0, 0.5, 1.0) == pytest.approx(0.5)
        assert exact_riemann(flux, -1.0, 1.0, -2.0, 1.0) == -1.0
        assert exact_riemann(flux, -1.0, 1.0, 2.0, 1.0) == 1.0

    def test_constant(self, flux):
        assert exact_riemann(flux, 0.0, 0.0, 1.23, 0.5) == 0.0

    def test_nonpositive_time_rejected(self, flux):
        with pytest.raises(ConfigError):
            exact_riemann(flux, 1.0, -1.0, 0.0, 0.0)

    def test_field_rows(self, flux, desk_grid, compressive):
        fld = exact_riemann_field(desk_grid, flux, compressive, np.array([0.0, 0.5, 1.0]))
        assert np.array_equal(fld.values[0], compressive.evaluate(desk_grid.nodes))
        assert np.array_equal(fld.values[1], fld.values[2])  # stationary


class TestDuhamel:
    def test_zero_flux_is_pure_heat(self, compressive):
        # independent closed form: step data evolves to an error function;
        # the grid step carries its jump between nodes, an O(dx) offset
        eps, t_final = 1.0, 0.25
        errs = []
        for n in (301, 601):
            grid = make_grid(6.0, n)
            fld = duhamel_solve(grid, zero_flux(), eps, compressive, t_final,
                                n_time_slices=16, n_sigma=8)
            exact = heat_step_profile(grid.nodes, t_final, eps)
            errs.append(np.max(np.abs(fld.values[-1][1:-1] - exact[1:-1])))
        assert errs[0] < 1.0 * (12.0 / 300)
        assert errs[0] / errs[1] > 1.8

    def test_constant_data(self, flux, desk_grid):
        fld = duhamel_solve(desk_grid, flux, 1.0, riemann_initial(0.4, 0.4), 0.25,
                            n_time_slices=8, n_sigma=8)
        assert np.max(np.abs(fld.values - 0.4)) < 1e-12

    def test_cross_validation_against_viscous(self, flux, desk_grid, compressive):
        t_final = 0.25
        duh = duhamel_solve(desk_grid, flux, 1.0, compressive, t_final)
        vis = solve_viscous(desk_grid, flux, 1.0, compressive, t_final,
                            PdeScheme(n_stored_times=3))
        interior = slice(1, -1)
        l1 = np.trapezoid(np.abs(duh.values[-1][interior] - vis.values[-1][interior]),
                          desk_grid.nodes[interior])
        assert l1 / 12.0 < 0.002  # well inside the 1% oracle tolerance

    def test_epsilon_zero_rejected(self, flux, desk_grid, compressive):
        with pytest.raises(ConfigError):
            duhamel_solve(desk_grid, flux, 0.0, compressive, 0.25)

    def test_non_contraction_reported(self, flux, compressive):
        grid = make_grid(6.0, 151)
        with pytest.raises(NonContractionError, match="reduce final_time"):
            duhamel_solve(grid, flux, 0.25, compressive, 6.0,
                          n_picard=12, n_time_slices=12, n_sigma=8)


class TestSampledInitial:
    def test_viscous_accepts_sampled_data(self, flux, desk_grid):
        vals = np.tanh(-desk_grid.nodes)
        u_in = sampled_initial(desk_grid, vals)
        fld = solve_viscous(desk_grid, flux, 0.5, u_in, 0.2, PdeScheme(n_stored_times=3))
        assert np.max(np.abs(fld.values)) <= u_in.sup_norm + 1e-10
