"""Command-line interface.

Subcommands::

    mfscl pde     --config ... --out DIR     solve and dump the mean field
    mfscl flow    --config ... --out DIR     dump X/Y particle trajectories
    mfscl push    --config ... --out DIR     dump pushforward/composition solutions
    mfscl sweep   --eps 1,0.5,0.25 --out DIR zero-noise convergence report
    mfscl figure N --out DIR                 emit one figure's CSV bundle
    mfscl verify                             run the diagnostic battery

Exit codes: 0 success, 1 usage error, 2 verification failure.  Desk-scale
parameters are the default; ``--full`` switches to the production values
(a configuration file always wins over both).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .core import (
    ConfigError,
    ExperimentConfig,
    SimulationError,
    load_config,
)
from .diagnostics import (
    heat_kernel_check,
    holder_bound_check,
    max_principle_check,
    oleinik_check,
)
from .experiments import (
    DEFAULT_SWEEP_EPSILONS,
    FieldCache,
    RunManifest,
    run_figure,
    run_sample,
    run_zero_noise_sweep,
    write_carriers_csv,
    write_csv,
    write_density_csv,
    write_field_csv,
    write_flow_csv,
)
from .filippov import lemma51_check


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--eps", type=str,
                        help="comma-separated noise amplitudes (sweep/verify)")
    parser.add_argument("--full", action="store_true",
                        help="use the production-scale default parameters")
    parser.add_argument("--out", type=Path, default=Path("mfscl_out"),
                        help="output directory (default: mfscl_out)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads; affects speed only, never results")


def _load(args) -> ExperimentConfig:
    if args.config is not None:
        config = load_config(args.config)
    elif args.full:
        config = ExperimentConfig()
    else:
        config = ExperimentConfig.desk_scale()
    if args.seed is not None:
        config = config.with_overrides(seed=args.seed)
    return config


def _eps_list(args, default) -> tuple[float, ...]:
    if not args.eps:
        return tuple(default)
    try:
        return tuple(float(s) for s in args.eps.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"bad --eps list: {args.eps!r}")


def _outdir(args) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_pde(args) -> int:
    config = _load(args)
    out = _outdir(args)
    cache = FieldCache()
    manifest = RunManifest(config=config)
    t0 = time.perf_counter()
    for eps in _eps_list(args, (config.epsilon,)):
        fld = cache.deterministic_field(config.with_overrides(epsilon=eps))
        name = f"mean_field_eps_{eps:g}.csv"
        write_field_csv(fld, out / name)
        manifest.add(f"pde_field_eps_{eps:g}", name)
    manifest.wall_time = time.perf_counter() - t0
    manifest.write(out / "pde_manifest.txt")
    print(f"wrote {len(manifest.outputs)} field dump(s) to {out}")
    return 0


def cmd_flow(args) -> int:
    config = _load(args)
    out = _outdir(args)
    t0 = time.perf_counter()
    sample = run_sample(config, 0)
    manifest = RunManifest(config=config)
    stride = max(1, sample.x_ensemble.positions.shape[1] // 64)
    for role, ens in (("flow_x", sample.x_ensemble), ("flow_y", sample.y_ensemble)):
        name = f"{role}.csv"
        write_flow_csv(ens.times, ens.positions, out / name, particle_stride=stride)
        manifest.add(role, name)
    manifest.wall_time = time.perf_counter() - t0
    manifest.write(out / "flow_manifest.txt")
    print(f"wrote flow trajectories to {out}")
    return 0


def cmd_push(args) -> int:
    config = _load(args)
    out = _outdir(args)
    t0 = time.perf_counter()
    sample = run_sample(config, 0)
    manifest = RunManifest(config=config)
    grid = config.grid()
    resampled = [s.grid_resampled for s in sample.density_series]
    write_density_csv(sample.times, grid, resampled, out / "density_u_eps.csv")
    manifest.add("density", "density_u_eps.csv")
    write_carriers_csv(sample.density_series, out / "carriers_u_eps.csv")
    manifest.add("carriers", "carriers_u_eps.csv")
    write_density_csv(sample.times, grid, sample.composition_series,
                      out / "composition_v_eps.csv")
    manifest.add("composition", "composition_v_eps.csv")
    manifest.wall_time = time.perf_counter() - t0
    manifest.write(out / "push_manifest.txt")
    print(f"wrote pushforward/composition dumps to {out}")
    return 0


def cmd_sweep(args) -> int:
    config = _load(args)
    out = _outdir(args)
    epsilons = _eps_list(args, DEFAULT_SWEEP_EPSILONS)
    t0 = time.perf_counter()
    report = run_zero_noise_sweep(config, epsilons, threads=args.threads)
    (out / "convergence_report.csv").write_text(
        "\n".join(report.csv_lines()) + "\n", encoding="utf-8")
    (out / "path_convergence.csv").write_text(
        "\n".join(report.path_csv_lines()) + "\n", encoding="utf-8")
    manifest = RunManifest(config=config)
    manifest.add("report", "convergence_report.csv")
    manifest.add("paths", "path_convergence.csv")
    extra = sorted(set(epsilons) - {1.0, 1.0 / 3.0})
    manifest.metadata["epsilons"] = ",".join(repr(e) for e in epsilons)
    if extra:
        manifest.metadata["non_paper_epsilons"] = ",".join(repr(e) for e in extra)
    manifest.wall_time = time.perf_counter() - t0
    manifest.write(out / "sweep_manifest.txt")
    print(report.format_table())
    return 0


def cmd_figure(args) -> int:
    config = _load(args)
    out = _outdir(args)
    manifest = run_figure(args.n, config, out)
    print(f"figure {args.n}: wrote {len(manifest.outputs)} files to {out}")
    return 0


def cmd_verify(args) -> int:
    config = _load(args)
    cache = FieldCache()
    failures = 0

    def check(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"[{status}] {name}: {detail}")

    flux = config.flux_model()
    dx = config.grid().dx
    for initial in ("compressive", "expansive"):
        for eps in _eps_list(args, (0.0, 1.0 / 3.0, 1.0)):
            cfg = config.with_overrides(epsilon=eps, initial=initial)
            fld = cache.deterministic_field(cfg)
            margin = max_principle_check(fld, cfg.initial_data())
            check(f"max principle {initial} eps={eps:g}", margin >= -1e-10,
                  f"margin {margin:.3e}")
            _, margins = oleinik_check(fld, flux, t_min=0.1)
            worst = float(margins.min())
            check(f"oleinik {initial} eps={eps:g}", worst >= -5.0 * dx,
                  f"worst margin {worst:.3e} (tol {-5.0 * dx:.3e})")
            if eps > 0:
                rep = holder_bound_check(fld, cfg.initial_data(), flux, eps, beta=0.5)
                check(f"holder {initial} eps={eps:g}",
                      np.isfinite(rep.fitted_constant) and rep.fitted_constant > 0,
                      f"fitted C {rep.fitted_constant:.3f}")

    for eps in (1.0, 0.5):
        for t in (0.1, 1.0):
            rep = heat_kernel_check(eps, t, beta=0.5)
            ok = (rep.normalization_error <= 1e-12
                  and abs(rep.grad_l1 - rep.grad_l1_anchor) <= 1e-8
                  and np.all(rep.lipschitz_chain_ratios <= 1.0 + 1e-6))
            check(f"heat kernel eps={eps:g} t={t:g}", ok,
                  f"norm err {rep.normalization_error:.1e}, "
                  f"grad L1 dev {abs(rep.grad_l1 - rep.grad_l1_anchor):.1e}")

    fmin = flux.f_second_min_on((-1.0, 1.0))
    lip_a = 0.5  # d/dv a(v) for Burgers; secant slopes of convex f halve
    for eps in (1.0, 0.5):
        cfg = config.with_overrides(epsilon=eps, initial="compressive")
        fld = cache.deterministic_field(cfg)
        from .core import drift_a as _a
        b_eps = fld.map_values(lambda v: _a(flux, v))
        grid = config.grid()
        from .experiments import entropy_reference_on
        u_ref = entropy_reference_on(grid, cfg, fld.times)
        b_lim = u_ref.map_values(lambda v: _a(flux, v))
        rep = lemma51_check(b_eps, b_lim, lambda t: lip_a / (t * fmin),
                            radius=1.0, t_min=0.1)
        check(f"lemma 5.1 eps={eps:g}", rep.ok,
              f"max ratio {rep.max_ratio:.3f}, {len(rep.osl_violations)} OSL violations")

    print(f"{failures} failure(s)" if failures else "all checks passed")
    return 2 if failures else 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mfscl", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, extra in (
        ("pde", cmd_pde, None),
        ("flow", cmd_flow, None),
        ("push", cmd_push, None),
        ("sweep", cmd_sweep, None),
        ("figure", cmd_figure, "n"),
        ("verify", cmd_verify, None),
    ):
        p = sub.add_parser(name)
        if extra == "n":
            p.add_argument("n", type=int, help="figure number (1-5)")
        _add_common(p)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
