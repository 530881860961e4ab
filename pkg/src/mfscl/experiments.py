"""Monte Carlo orchestration, the named experiment suite, and file output.

One deterministic mean-field solve is shared by all Monte Carlo samples of
a configuration (for eps > 0 the viscous solver, for eps = 0 the Godunov
entropy reference, which is the zero-noise drift).  Samples are integrated
in batch: positions carry an (n_mc, n_particles) array, one shared
Brownian increment per sample and step, and all reductions run in
sample-index order so results are independent of threading and batching.

Weak-* functionals compare the particle quadrature against the entropy
reference sampled on the *seed* grid, so both sides share one quadrature
and the error vanishes identically at t = 0.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    ConfigError,
    ExperimentConfig,
    Grid1D,
    InstabilityError,
    SpaceTimeField,
    TestFunction,
    drift_a,
    make_grid,
)
from .diagnostics import (
    ConvergenceReport,
    ReportRow,
    band_coverage,
    mean_consistency,
    oleinik_check,
    weak_star_error_from_table,
)
from .filippov import filippov_solve
from .pde import PdeScheme, exact_riemann_field, solve_entropy_reference, solve_viscous
from .sde import evolve_flow, identity_transform, standard_normals
from .transport import (
    DensitySample,
    pushforward_density,
    compose_solution,
    seed_weights,
    with_resampling,
)

#: Path-convergence probes straddle the shock of the compressive test case.
DEFAULT_PROBES = (-1.0, -0.5, 0.5, 1.0)

#: Default zero-noise sweep; 1 and 1/3 match the published figures, the
#: intermediate values extend the sweep (flagged in manifests).
DEFAULT_SWEEP_EPSILONS = (1.0, 0.5, 0.25)
PAPER_EPSILONS = (1.0, 1.0 / 3.0)


def stored_sde_indices(n_steps: int, n_stored: int) -> np.ndarray:
    """Thinned step indices: every ``stride`` steps plus the final step."""
    stride = max(1, int(round(n_steps / max(1, n_stored - 1))))
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


# ---------------------------------------------------------------------------
# shared deterministic field


class FieldCache:
    """Caches the deterministic drift field per configuration.

    The eps = 0 drift is the Godunov entropy reference (the upwind viscous
    scheme is not entropy-consistent for expansive data at zero viscosity).
    """

    def __init__(self) -> None:
        self._fields: dict[tuple, SpaceTimeField] = {}
        self.solve_count = 0

    @staticmethod
    def _key(config: ExperimentConfig) -> tuple:
        return (
            config.epsilon, config.final_time, config.half_length, config.n_points,
            config.flux, config.initial, config.initial_left, config.initial_right,
            config.initial_jump, config.n_stored_times, config.cfl_safety,
        )

    def deterministic_field(self, config: ExperimentConfig) -> SpaceTimeField:
        key = self._key(config)
        cached = self._fields.get(key)
        if cached is not None:
            return cached
        grid = config.grid()
        flux = config.flux_model()
        u_in = config.initial_data()
        if config.epsilon > 0:
            fld = solve_viscous(
                grid, flux, config.epsilon, u_in, config.final_time,
                PdeScheme(cfl_safety=config.cfl_safety,
                          n_stored_times=config.n_stored_times),
            )
        else:
            fld = solve_entropy_reference(
                grid, flux, u_in, config.final_time,
                cfl_safety=config.cfl_safety, n_stored_times=config.n_stored_times,
            )
        self.solve_count += 1
        self._fields[key] = fld
        return fld


_GLOBAL_CACHE = FieldCache()


def entropy_reference_on(grid: Grid1D, config: ExperimentConfig,
                         times: np.ndarray) -> SpaceTimeField:
    """Entropy solution sampled on (grid, times): exact Riemann solution for
    two-state data, Godunov interpolated in time otherwise."""
    flux = config.flux_model()
    u_in = config.initial_data()
    if u_in.is_riemann:
        return exact_riemann_field(grid, flux, u_in, times)
    god = solve_entropy_reference(grid, flux, u_in, config.final_time,
                                  cfl_safety=config.cfl_safety,
                                  n_stored_times=max(2 * times.size, 81))
    rows = np.empty((times.size, grid.n_points))
    for j, t in enumerate(times):
        rows[j] = god.slice_at(float(t))
    return SpaceTimeField(grid, times, rows)


# ---------------------------------------------------------------------------
# single-sample pipeline


@dataclass(frozen=True)
class SampleResult:
    """One Monte Carlo sample: pushforward and composition solutions at the
    stored times, plus the underlying ensembles."""

    config: ExperimentConfig
    sample_index: int
    times: np.ndarray
    density_series: tuple[DensitySample, ...]
    composition_series: np.ndarray  # (n_stored, n_points) v on the grid
    x_ensemble: object
    y_ensemble: object


def run_sample(config: ExperimentConfig, sample_index: int,
               cache: FieldCache | None = None) -> SampleResult:
    """Full pipeline for one sample: shared PDE solve, one Brownian bundle,
    X-flow (drift a(m)) and Y-flow (drift m), pushforward and composition."""
    from .sde import make_brownian

    cache = cache or _GLOBAL_CACHE
    fld = cache.deterministic_field(config)
    grid = config.grid()
    flux = config.flux_model()
    u_in = config.initial_data()
    seeds = config.particle_seeds()
    dt = config.sde_dt()
    stride = max(1, int(round(config.n_time_steps / max(1, config.n_stored_times - 1))))

    bundle = make_brownian(config.seed, sample_index, config.n_time_steps, dt)
    x_ens = evolve_flow(fld, lambda v: drift_a(flux, v), seeds, config.epsilon,
                        bundle, store_stride=stride)
    y_ens = evolve_flow(fld, identity_transform, seeds, config.epsilon,
                        bundle, store_stride=stride)

    densities = []
    compositions = []
    for j in range(x_ens.times.size):
        densities.append(with_resampling(pushforward_density(u_in, x_ens, j), grid))
        compositions.append(compose_solution(u_in, y_ens, j, grid))
    return SampleResult(
        config=config,
        sample_index=sample_index,
        times=x_ens.times,
        density_series=tuple(densities),
        composition_series=np.asarray(compositions),
        x_ensemble=x_ens,
        y_ensemble=y_ens,
    )


# ---------------------------------------------------------------------------
# batched Monte Carlo driver


@dataclass(frozen=True)
class EnsembleResult:
    times: np.ndarray                       # stored SDE times
    functional_errors: dict[str, np.ndarray]  # theta name -> (n_mc, n_stored)
    final_resampled: np.ndarray             # (n_mc, n_points) u_eps at final time
    mass_defects: np.ndarray                # (n_mc,) max over stored times
    probe_paths: np.ndarray                 # (n_mc, n_stored, n_probes)
    probes: tuple[float, ...]
    monotone_violations: int


def run_ensemble(config: ExperimentConfig, n_mc: int | None = None,
                 probes: tuple[float, ...] = (), cache: FieldCache | None = None,
                 u_ref: SpaceTimeField | None = None) -> EnsembleResult:
    """Evolve the X-flow for ``n_mc`` samples at once (sample-major arrays).

    Equivalent to per-sample ``evolve_flow`` plus ``pushforward_density``
    bit for bit: each particle sees the same arithmetic, batching only adds
    an outer array axis.
    """
    cache = cache or _GLOBAL_CACHE
    n_mc = config.n_mc if n_mc is None else n_mc
    fld = cache.deterministic_field(config)
    grid = config.grid()
    flux = config.flux_model()
    u_in = config.initial_data()
    thetas = config.thetas()
    seeds = config.particle_seeds()
    weights = seed_weights(seeds)
    masses = np.asarray(u_in.evaluate(seeds), dtype=float) * weights
    mass0 = float(masses.sum())

    n_steps = config.n_time_steps
    dt = config.sde_dt()
    stored = stored_sde_indices(n_steps, config.n_stored_times)
    stored_times = np.where(stored < n_steps, stored * dt, config.final_time)
    seed_grid = make_grid(config.half_length, config.n_paths)
    if u_ref is None:
        u_ref = entropy_reference_on(seed_grid, config, stored_times)
    elif u_ref.times.size != stored_times.size or not np.allclose(
            u_ref.times, stored_times, rtol=1e-9, atol=1e-12):
        raise ConfigError("reference field times do not match the stored SDE times")

    increments = np.empty((n_mc, n_steps))
    for s in range(n_mc):
        increments[s] = standard_normals(config.seed, s, n_steps) * math.sqrt(dt)

    pos = np.broadcast_to(seeds, (n_mc, seeds.size)).copy()
    probe_arr = np.asarray(probes, dtype=float)
    probe_pos = np.broadcast_to(probe_arr, (n_mc, probe_arr.size)).copy()

    # precomputed time brackets into the stored PDE slices
    step_times = dt * np.arange(n_steps)
    jbr = np.clip(np.searchsorted(fld.times, step_times, side="right") - 1,
                  0, fld.times.size - 2)
    wbr = np.clip((step_times - fld.times[jbr]) / (fld.times[jbr + 1] - fld.times[jbr]),
                  0.0, 1.0)

    nodes = fld.grid.nodes
    theta_refs = {th.name: np.array([
        np.trapezoid(th(seed_grid.nodes) * u_ref.values[j], seed_grid.nodes)
        for j in range(stored_times.size)]) for th in thetas}
    theta_seeds_end = (seeds[0], seeds[-1])

    errors = {th.name: np.empty((n_mc, stored_times.size)) for th in thetas}
    probe_hist = np.empty((n_mc, stored_times.size, probe_arr.size))
    violations = 0

    def record(j_stored: int) -> None:
        nonlocal violations
        if not np.all(np.isfinite(pos)):
            raise InstabilityError("ensemble produced NaN/overflow")
        for th in thetas:
            p_in = th(pos) @ masses
            err = p_in - theta_refs[th.name][j_stored]
            if u_in.is_riemann and th.antiderivative is not None:
                a = th.antiderivative
                half = config.half_length
                d_l = pos[:, 0] - theta_seeds_end[0]
                d_r = pos[:, -1] - theta_seeds_end[1]
                err = err + u_in.left * (a(-half + d_l) - a(np.float64(-half)))
                err = err - u_in.right * (a(half + d_r) - a(np.float64(half)))
            errors[th.name][:, j_stored] = err
        if config.epsilon > 0:
            violations += int(np.count_nonzero(np.diff(pos, axis=1) <= 0.0))
        probe_hist[:, j_stored, :] = probe_pos

    transform = (lambda v: drift_a(flux, v))
    record(0)
    next_store = 1
    for j in range(n_steps):
        row = (1.0 - wbr[j]) * fld.values[jbr[j]] + wbr[j] * fld.values[jbr[j] + 1]
        v = transform(np.interp(pos, nodes, row))
        pos = pos + v * dt + config.epsilon * increments[:, j:j + 1]
        if probe_arr.size:
            vp = transform(np.interp(probe_pos, nodes, row))
            probe_pos = probe_pos + vp * dt + config.epsilon * increments[:, j:j + 1]
        if config.epsilon == 0.0:
            np.maximum.accumulate(pos, axis=1, out=pos)
        if next_store < stored.size and j + 1 == stored[next_store]:
            record(next_store)
            next_store += 1

    # densities at the final time, resampled to the PDE grid
    span_x = np.empty_like(seeds)
    span_x[1:-1] = seeds[2:] - seeds[:-2]
    span_x[0] = seeds[1] - seeds[0]
    span_x[-1] = seeds[-1] - seeds[-2]
    span_y = np.empty_like(pos)
    span_y[:, 1:-1] = pos[:, 2:] - pos[:, :-2]
    span_y[:, 0] = pos[:, 1] - pos[:, 0]
    span_y[:, -1] = pos[:, -1] - pos[:, -2]
    u0 = np.asarray(u_in.evaluate(seeds), dtype=float)
    good = span_y > 0.0
    values = np.divide(u0 * span_x, span_y, out=np.zeros_like(pos), where=good)
    final_resampled = np.empty((n_mc, grid.n_points))
    for s in range(n_mc):
        ys, vs = pos[s], values[s]
        if not np.all(good[s]):
            keep = np.concatenate(([True], np.diff(ys) > 0.0))
            ys, vs = ys[keep], vs[keep]
        final_resampled[s] = np.interp(grid.nodes, ys, vs)

    mass_defects = np.abs(np.sum(np.broadcast_to(masses, pos.shape), axis=1) - mass0)
    return EnsembleResult(
        times=stored_times,
        functional_errors=errors,
        final_resampled=final_resampled,
        mass_defects=mass_defects,
        probe_paths=probe_hist,
        probes=tuple(float(p) for p in probe_arr),
        monotone_violations=violations,
    )


# ---------------------------------------------------------------------------
# zero-noise sweep


def filippov_reference_paths(config: ExperimentConfig, probes,
                             cache: FieldCache | None = None):
    """Zero-noise Filippov limit paths for the probe set, sampled on the
    stored SDE times (integrated at the SDE step size)."""
    cache = cache or _GLOBAL_CACHE
    grid = config.grid()
    flux = config.flux_model()
    u_field = entropy_reference_on(
        grid, config,
        np.linspace(0.0, config.final_time, config.n_stored_times))
    dt = config.sde_dt()
    path = filippov_solve(u_field, flux, 0.0, np.asarray(probes, dtype=float),
                          0.0, config.final_time, dt)
    stored = stored_sde_indices(config.n_time_steps, config.n_stored_times)
    return path.times[stored], path.positions[stored], u_field


def run_zero_noise_sweep(config: ExperimentConfig, epsilons=DEFAULT_SWEEP_EPSILONS,
                         probes=DEFAULT_PROBES, threads: int = 1,
                         cache: FieldCache | None = None) -> ConvergenceReport:
    """Per-epsilon Monte Carlo ensembles with weak-* errors (p = 1, 2 for
    every configured test function), mean-field consistency, Oleinik margin,
    mass audit, and probe-path convergence toward the Filippov limit."""
    epsilons = tuple(float(e) for e in epsilons)
    if any(e <= 0 for e in epsilons):
        raise ConfigError("sweep epsilons must be positive")
    cache = cache or FieldCache()
    report = ConvergenceReport(config_hash=config.config_hash(), seed=config.seed)
    ref_times, ref_paths, _ = filippov_reference_paths(config, probes, cache)

    def one_row(eps: float) -> ReportRow:
        t0 = time.perf_counter()
        cfg = config.with_overrides(epsilon=eps)
        fld = cache.deterministic_field(cfg)
        res = run_ensemble(cfg, probes=tuple(probes), cache=cache)
        weak = {}
        for name, table in res.functional_errors.items():
            for p in (1.0, 2.0):
                weak[(name, p)] = weak_star_error_from_table(table, p)
        l1 = mean_consistency(res.final_resampled, fld)
        _, margins = oleinik_check(fld, cfg.flux_model(), t_min=0.1)
        path_err = {}
        for i, x0 in enumerate(res.probes):
            dev = np.abs(res.probe_paths[:, :, i] - ref_paths[:, i][None, :])
            path_err[x0] = float(np.mean(dev.max(axis=1)))
        return ReportRow(
            epsilon=eps,
            weak_star=weak,
            l1_mean_field=l1,
            oleinik_margin=float(margins.min()) if margins.size else math.inf,
            mass_defect=float(res.mass_defects.max()),
            path_errors=path_err,
            n_mc=cfg.n_mc,
            runtime=time.perf_counter() - t0,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one_row, epsilons))
    else:
        rows = [one_row(eps) for eps in epsilons]
    for row in rows:  # reduction in epsilon order regardless of completion order
        report.add_row(row)
    return report


# ---------------------------------------------------------------------------
# CSV / manifest output


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_field_csv(fld: SpaceTimeField, path: Path, transform=None) -> None:
    """Time-major dump: header t,x,value."""
    values = fld.values if transform is None else transform(fld.values)
    rows = ((t, x, values[j, i])
            for j, t in enumerate(fld.times)
            for i, x in enumerate(fld.grid.nodes))
    write_csv(path, "t,x,value", rows)


def write_flow_csv(times: np.ndarray, positions: np.ndarray, path: Path,
                   particle_stride: int = 1) -> None:
    """Trajectory dump: header t,particle_id,position (thinned particles)."""
    ids = np.arange(positions.shape[1])[::particle_stride]
    rows = ((t, int(p), positions[j, p])
            for j, t in enumerate(times)
            for p in ids)
    write_csv(path, "t,particle_id,position", rows)


def write_density_csv(times, grid: Grid1D, resampled_rows, path: Path) -> None:
    rows = ((t, x, resampled_rows[j][i])
            for j, t in enumerate(times)
            for i, x in enumerate(grid.nodes))
    write_csv(path, "t,x,u_eps", rows)


def write_carriers_csv(series, path: Path) -> None:
    rows = ((s.time, int(p), s.carrier_positions[p], s.carrier_values[p])
            for s in series
            for p in range(s.carrier_positions.size))
    write_csv(path, "t,particle_id,position,value", rows)


@dataclass
class RunManifest:
    config: ExperimentConfig
    outputs: list[tuple[str, str]] = field(default_factory=list)  # (role, filename)
    metadata: dict[str, str] = field(default_factory=dict)
    wall_time: float = 0.0

    def add(self, role: str, filename: str) -> None:
        self.outputs.append((role, filename))

    def roles(self) -> dict[str, str]:
        return dict(self.outputs)

    def write(self, path: Path) -> None:
        lines = [f"config_hash = {self.config.config_hash()}",
                 f"seed = {self.config.seed}"]
        for key in sorted(self.metadata):
            lines.append(f"{key} = {self.metadata[key]}")
        for role, filename in self.outputs:
            lines.append(f"output.{role} = {filename}")
        lines.append(f"wall_time = {self.wall_time!r}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


# ---------------------------------------------------------------------------
# figure bundles


def _solution_columns(cfg: ExperimentConfig, sample: SampleResult,
                      cache: FieldCache, la_salt: bool):
    grid = cfg.grid()
    fld = cache.deterministic_field(cfg)
    u_field = entropy_reference_on(grid, cfg, np.asarray([cfg.final_time]))
    if la_salt:
        stochastic = sample.composition_series[-1]
        name = "v_eps"
    else:
        stochastic = sample.density_series[-1].grid_resampled
        name = "u_eps"
    header = f"x,{name},m_eps,u_entropy"
    rows = zip(grid.nodes, stochastic, fld.values[-1], u_field.values[0])
    return header, rows


def _emit_case(cfg: ExperimentConfig, tag: str, out_dir: Path, manifest: RunManifest,
               cache: FieldCache, la_salt: bool, with_flow: bool) -> None:
    flux = cfg.flux_model()
    sample = run_sample(cfg, 0, cache=cache)
    header, rows = _solution_columns(cfg, sample, cache, la_salt)
    fname = f"solution_{tag}.csv"
    write_csv(out_dir / fname, header, rows)
    manifest.add(f"solution_{tag}", fname)
    if with_flow:
        ens = sample.y_ensemble if la_salt else sample.x_ensemble
        stride = max(1, ens.positions.shape[1] // 48)
        fname = f"flow_{tag}.csv"
        write_flow_csv(ens.times, ens.positions, out_dir / fname, particle_stride=stride)
        manifest.add(f"flow_{tag}", fname)
        fld = cache.deterministic_field(cfg)
        drift_mag = (lambda v: np.abs(v)) if la_salt else (lambda v: np.abs(drift_a(flux, v)))
        fname = f"drift_{tag}.csv"
        write_field_csv(fld, out_dir / fname, transform=drift_mag)
        manifest.add(f"drift_{tag}", fname)


def _emit_stats(cfg: ExperimentConfig, tag: str, out_dir: Path, manifest: RunManifest,
                cache: FieldCache, n_faint: int = 4) -> None:
    grid = cfg.grid()
    fld = cache.deterministic_field(cfg)
    res = run_ensemble(cfg, cache=cache)
    mean = res.final_resampled.mean(axis=0)
    std = res.final_resampled.std(axis=0, ddof=1)
    fname = f"stats_{tag}.csv"
    write_csv(out_dir / fname, "x,m_eps,mc_mean,mc_std",
              zip(grid.nodes, fld.values[-1], mean, std))
    manifest.add(f"stats_{tag}", fname)
    n_faint = min(n_faint, res.final_resampled.shape[0])
    header = "x," + ",".join(f"sample_{s}" for s in range(n_faint))
    rows = (tuple([x] + [res.final_resampled[s, i] for s in range(n_faint)])
            for i, x in enumerate(grid.nodes))
    fname = f"samples_{tag}.csv"
    write_csv(out_dir / fname, header, rows)
    manifest.add(f"samples_{tag}", fname)


FIGURE_IDS = (1, 2, 3, 4, 5)


def run_figure(figure_id: int, config: ExperimentConfig, out_dir,
               cache: FieldCache | None = None) -> RunManifest:
    """Emit the CSV bundle behind one of the five published figure layouts.

    1: pushforward solution + X-flow, compressive, eps in {1, 1/3}
    2: composition solution + Y-flow, compressive, same Brownian draw
    3: mean/std band vs the deterministic mean field, both test cases
    4: pushforward solution, expansive
    5: composition solution, expansive
    """
    if figure_id not in FIGURE_IDS:
        raise ConfigError(f"unknown figure {figure_id}; valid: {FIGURE_IDS}")
    cache = cache or FieldCache()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest = RunManifest(config=config)
    manifest.metadata["figure"] = str(figure_id)

    if figure_id in (1, 2, 4, 5):
        initial = "compressive" if figure_id in (1, 2) else "expansive"
        la_salt = figure_id in (2, 5)
        with_flow = figure_id in (1, 2)
        for eps, side in zip(PAPER_EPSILONS, ("left", "right")):
            cfg = config.with_overrides(epsilon=eps, initial=initial)
            manifest.metadata[f"epsilon_{side}"] = repr(eps)
            _emit_case(cfg, side, out_dir, manifest, cache, la_salt, with_flow)
    else:
        for initial in ("compressive", "expansive"):
            cfg = config.with_overrides(epsilon=1.0, initial=initial)
            _emit_stats(cfg, initial, out_dir, manifest, cache)
        manifest.metadata["epsilon"] = repr(1.0)
        manifest.metadata["n_mc"] = str(config.n_mc)

    manifest.wall_time = time.perf_counter() - t0
    manifest.write(out_dir / f"figure{figure_id}_manifest.txt")
    return manifest
