"""Stochastic mean-field perturbations of scalar conservation laws.

Numerical toolkit for the mean-field continuity equation driven by common
transport noise: viscous and entropy solvers for the deterministic mean
field, Euler-Maruyama particle flows, pushforward/composition solution
reconstruction, Filippov differential-inclusion machinery, and a
verification suite for the zero-noise limit.
"""

from .core import (
    ExperimentConfig,
    FluxModel,
    Grid1D,
    InitialData,
    SpaceTimeField,
    burgers_flux,
    compressive_initial,
    drift_a,
    drift_a_k,
    expansive_initial,
    load_config,
    make_grid,
    parse_config_text,
    riemann_initial,
)
from .pde import (
    PdeScheme,
    cfl_timestep,
    duhamel_solve,
    exact_riemann,
    solve_entropy_reference,
    solve_viscous,
)
from .sde import BrownianBundle, ParticleEnsemble, evolve_flow, interp_drift, invert_flow, make_brownian
from .transport import DensitySample, compose_solution, pushforward_density, representation_k, resample_to_grid
from .filippov import d_R_distance, filippov_solve, lemma51_check, local_essinf, local_esssup, osl_seminorm
from .diagnostics import (
    ConvergenceReport,
    band_coverage,
    heat_kernel_check,
    holder_bound_check,
    max_principle_check,
    mean_consistency,
    oleinik_check,
    weak_star_error,
)
from .experiments import FieldCache, RunManifest, run_ensemble, run_figure, run_sample, run_zero_noise_sweep

__version__ = "0.1.0"
