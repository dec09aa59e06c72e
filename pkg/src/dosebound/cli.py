"""Command-line interface.

Subcommands:
  simulate      Monte Carlo experiment on the built-in generating process.
  analyze       Bound-curve estimation on a user CSV (x1..xp,t,y).
  oracle-check  Randomized verification of the closed-form bounds.
  sensfn        Evaluate a sensitivity family at a pair or on a grid.

Exit codes: 0 success, 1 runtime or verification failure, 2 usage/config
error.  DOSEBOUND_THREADS mirrors --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .core_data import Dataset, ExposureDomain, RunConfig
from .errors import ConfigurationError, DoseboundError, InputError, VerificationError
from .oracle_bounds import oracle_cross_check, random_instances
from .pipeline import default_grid, estimate_bound_curve
from .sensitivity import make_family
from .simulation import DGP_DOMAIN, DGPSpec, run_experiment, sample_dgp

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("DOSEBOUND_THREADS")
    return max(1, int(env)) if env else 1


def _load_config(path) -> RunConfig:
    try:
        return RunConfig.from_file(path)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None


# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    os.makedirs(args.out, exist_ok=True)
    report = run_experiment(
        reps=args.reps,
        n=args.n,
        config=config,
        use_analytic_nuisances=not args.fitted_nuisances,
        threads=_threads(args),
    )
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json())
    report.write_curves_csv(os.path.join(args.out, "curves.csv"))
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(_summary_text(report))
    if args.dump_data:
        _dump_first_rep(args, config)
    if args.gnuplot:
        _write_gnuplot(os.path.join(args.out, "plot.gp"))
    print(f"wrote report.json, curves.csv, summary.txt to {args.out}")
    return EXIT_OK


def _summary_text(report) -> str:
    lines = ["t  truth  nuc_mean  nuc_cov  ros_lo  ros_hi  mar_lo  mar_hi"]
    for i, t in enumerate(report.grid):
        lines.append(
            f"{t:.2f}  {report.truth[i]: .3f}  "
            f"{report.mean_estimate['nuc'][i]: .3f}  {report.nuc_coverage[i]:.2f}  "
            f"{report.mean_estimate['rosenbaum_lower'][i]: .3f}  "
            f"{report.mean_estimate['rosenbaum_upper'][i]: .3f}  "
            f"{report.mean_estimate['marginal_lower'][i]: .3f}  "
            f"{report.mean_estimate['marginal_upper'][i]: .3f}"
        )
    lines.append("")
    for model, rate in report.bracket_rate.items():
        lines.append(f"bracket rate ({model}): {rate:.3f}")
    lines.append(f"replications: {report.reps}, n: {report.n}")
    lines.append(f"runtime: {report.runtime_seconds:.1f} s")
    return "\n".join(lines) + "\n"


def _dump_first_rep(args, config: RunConfig) -> None:
    """Write replication 0's dataset, effective config, and in-process curve
    so `analyze` can reproduce the curve byte-for-byte."""
    from .simulation import _rep_entropy, analytic_bundle_factory

    ds = sample_dgp(DGPSpec(n=args.n, seed=_rep_entropy(config.seed, 0)))
    ds.to_csv(os.path.join(args.out, "data_rep0.csv"))
    eff = RunConfig(
        model=config.model,
        side=config.side,
        sensitivity=config.sensitivity,
        basis=config.basis,
        quadrature_nodes=config.quadrature_nodes,
        density_floor=config.density_floor,
        seed=config.seed + 0,
        alpha=config.alpha,
        domain=DGP_DOMAIN,
        K=config.K,
        cross_fit=config.cross_fit,
        nested_fit=config.nested_fit,
        learner=config.learner,
    )
    with open(os.path.join(args.out, "config_rep0.json"), "w") as fh:
        fh.write(eff.to_json())
    factory = analytic_bundle_factory() if not args.fitted_nuisances else None
    grid = default_grid(ds.domain)
    curve, _ = estimate_bound_curve(ds, eff, grid, bundle_factory=factory)
    curve.to_csv(os.path.join(args.out, "curve_rep0.csv"))


def _write_gnuplot(path) -> None:
    with open(path, "w") as fh:
        fh.write(
            "set datafile separator ','\n"
            "set key autotitle columnhead\n"
            "plot 'curve.csv' using 1:2 with lines title 'estimate', \\\n"
            "     '' using 1:4 with lines title 'ci_lo', \\\n"
            "     '' using 1:5 with lines title 'ci_hi'\n"
        )


# ---------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    config = _load_config(args.config)
    if args.model:
        config = _override(config, model=args.model)
    if args.side:
        config = _override(config, side=args.side)
    if config.domain is None:
        raise ConfigurationError("analyze requires a domain {lo, hi} in the config")
    ds = Dataset.from_csv(args.data, config.domain)
    grid = _parse_grid(args.grid, config.domain)
    os.makedirs(args.out, exist_ok=True)
    curve, diagnostics = estimate_bound_curve(ds, config, grid)
    curve.to_csv(os.path.join(args.out, "curve.csv"))
    with open(os.path.join(args.out, "curve.json"), "w") as fh:
        json.dump(curve.to_dict(), fh, indent=2)
    for i, diag in enumerate(diagnostics):
        print(
            f"triple {i}: max density ratio {diag['max_density_ratio']:.3f}, "
            f"tau snap distance {diag['snap_distance']:.4f}, "
            f"quadrature nodes {diag['n_quad_nodes']}"
        )
    if args.gnuplot:
        _write_gnuplot(os.path.join(args.out, "plot.gp"))
    print(f"wrote curve.csv, curve.json to {args.out}")
    return EXIT_OK


def _override(config: RunConfig, **kw) -> RunConfig:
    from .pipeline import _with

    return _with(config, **kw)


def _parse_grid(spec, domain: ExposureDomain) -> np.ndarray:
    if spec is None:
        return default_grid(domain)
    if "," in spec:
        vals = np.asarray([float(v) for v in spec.split(",")])
    else:
        vals = default_grid(domain, points=int(spec))
    if np.any(vals < domain.lo) or np.any(vals > domain.hi):
        raise InputError("grid points fall outside the configured domain")
    return vals


# ---------------------------------------------------------------------------


def cmd_oracle_check(args) -> int:
    if args.instances < 1:
        raise ConfigurationError("--instances must be positive")
    lo, hi = args.param_range
    checked = 0
    for dist, value in random_instances(args.instances, args.max_support, (lo, hi), args.seed):
        oracle_cross_check(dist, value)
        checked += 1
    print(
        f"oracle-check: {checked} instances, support <= {args.max_support}, "
        f"parameter in [{lo}, {hi}]: all ordering and equivalence checks passed"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------


def cmd_sensfn(args) -> int:
    domain = ExposureDomain(args.domain[0], args.domain[1])
    sf = make_family(args.family, args.params, domain)
    if args.eval is not None:
        t, tp = args.eval
        print(f"{sf.eval(t, tp):.7f}")
        return EXIT_OK
    pts = np.linspace(domain.lo, domain.hi, args.grid_points)
    print("t,t_prime,value")
    for t in pts:
        vals = sf.eval(np.full(pts.size, t), pts)
        for tp, v in zip(pts, np.atleast_1d(vals)):
            print(f"{float(t)!r},{float(tp)!r},{float(v)!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dosebound", description=__doc__)
    parser.add_argument("--threads", type=int, default=None, help="worker cap (or DOSEBOUND_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="Monte Carlo experiment on the built-in process")
    p_sim.add_argument("--reps", type=int, default=100)
    p_sim.add_argument("--n", type=int, default=5000)
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--fitted-nuisances", action="store_true",
                       help="fit built-in learners instead of oracle surfaces")
    p_sim.add_argument("--dump-data", action="store_true",
                       help="also write replication 0's dataset/config/curve")
    p_sim.add_argument("--gnuplot", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="estimate bound curves from a CSV")
    p_an.add_argument("--data", required=True)
    p_an.add_argument("--config", required=True)
    p_an.add_argument("--model", choices=["rosenbaum", "marginal"])
    p_an.add_argument("--side", choices=["lower", "upper"])
    p_an.add_argument("--grid", help="point count or comma-separated values")
    p_an.add_argument("--out", required=True)
    p_an.add_argument("--gnuplot", action="store_true")
    p_an.set_defaults(func=cmd_analyze)

    p_oc = sub.add_parser("oracle-check", help="randomized closed-form verification")
    p_oc.add_argument("--instances", type=int, default=1000)
    p_oc.add_argument("--max-support", type=int, default=12)
    p_oc.add_argument("--param-range", type=float, nargs=2, default=(1.0, 10.0))
    p_oc.add_argument("--seed", type=int, default=0)
    p_oc.set_defaults(func=cmd_oracle_check)

    p_sf = sub.add_parser("sensfn", help="evaluate a sensitivity family")
    p_sf.add_argument("--family", required=True)
    p_sf.add_argument("--params", type=float, nargs="+", required=True)
    p_sf.add_argument("--domain", type=float, nargs=2, default=(0.0, 1.0))
    p_sf.add_argument("--eval", type=float, nargs=2, metavar=("T", "T_PRIME"))
    p_sf.add_argument("--grid-points", type=int, default=11)
    p_sf.set_defaults(func=cmd_sensfn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        if exc.counterexample is not None:
            print(json.dumps(exc.counterexample, indent=2), file=sys.stderr)
        return EXIT_FAILURE
    except DoseboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
