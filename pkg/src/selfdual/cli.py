"""Command-line front end: ``run``, ``check``, and ``sweep``.

Exit codes for ``run`` (and per-value runs of ``sweep``):

* 0 -- solver converged and the certificate is at or below the configured
  threshold;
* 1 -- the solve failed or missed the threshold (partial output is written);
* 2 -- the configuration did not parse or validate;
* 3 -- the problem builder refused its inputs.

``check`` prints one pass/fail line per invariant and exits 0 only when all
pass.  The output directory resolves as: ``--out`` flag, else the ``OUT_DIR``
environment variable, else ``output.dir`` from the config, else ``out``.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, load_config, validate_config
from .problems import PROBLEM_SCHEMAS, BuildError, build_by_name
from .stationary import ProblemStructureError


def _resolve_outdir(cfg, cli_out):
    if cli_out:
        return cli_out
    env = os.environ.get("OUT_DIR")
    if env:
        return env
    return cfg.out_dir


def _solve(cfg, built):
    from . import evolution, stationary

    opts = cfg.solver_options
    if cfg.solver == "minimize":
        return stationary.solve_minimize(
            built.problem,
            max_iter=int(opts.get("max_iter", 500)),
            gtol=float(opts.get("gtol", 1e-10)),
            cert_tol=float(opts.get("cert_tol", 1e-6)))
    if cfg.solver == "picard":
        return stationary.solve_picard(
            built.problem,
            damping=float(opts.get("damping", 1.0)),
            max_iter=int(opts.get("max_iter", 200)),
            tol=float(opts.get("tol", 1e-12)))
    if cfg.solver == "marching":
        return evolution.solve_marching_prox(
            built.problem,
            step_cert_tol=float(opts.get("step_cert_tol", 1e-10)),
            step_max_iter=int(opts.get("max_iter", 500)))
    if cfg.solver == "path_minimize":
        return evolution.solve_path_minimize(
            built.problem,
            max_iter=int(opts.get("max_iter", 2000)),
            cert_tol=float(opts.get("cert_tol", 1e-8)))
    if cfg.solver == "lambda_flow":
        return evolution.lambda_flow(
            built.problem,
            schedule=opts["lambda_schedule"],
            max_iter=int(opts.get("max_iter", 2000)),
            cert_tol=float(opts.get("cert_tol", 1e-8)))
    raise ConfigError(f"unknown solver {cfg.solver!r}")


def _run_once(cfg, outdir):
    from . import reporting

    try:
        built = build_by_name(cfg.problem, cfg.problem_params)
    except (BuildError, ProblemStructureError) as exc:
        print(f"build error: {exc}", file=sys.stderr)
        return 3, None
    report = _solve(cfg, built)
    if cfg.is_path_problem:
        summary = reporting.write_path_report(outdir, cfg, built, report)
    else:
        summary = reporting.write_stationary_report(outdir, cfg, built, report)
    ok = report.converged and report.certificate <= cfg.cert_threshold
    print(f"{cfg.problem} [{cfg.solver}] status={report.status} "
          f"certificate={report.certificate:.3e} -> {outdir}")
    return (0 if ok else 1), summary


def cmd_run(args):
    try:
        cfg = validate_config(_config_with_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = _resolve_outdir(cfg, args.out)
    code, _ = _run_once(cfg, outdir)
    return code


def _config_with_overrides(args):
    values = load_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    return values


def cmd_check(args):
    from .checks import format_results, run_checks

    try:
        results = run_checks(args.suite, rng_seed=args.seed or 0)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(format_results(results))
    failed = [r for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} checks passed")
    return 0 if not failed else 1


def cmd_sweep(args):
    try:
        values = _config_with_overrides(args)
        base_cfg = validate_config(values)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    param = args.param
    schema = PROBLEM_SCHEMAS[base_cfg.problem]
    if param not in schema and param != "cert_threshold" \
            and param not in ("lambda_schedule",):
        print(f"config error: problem {base_cfg.problem!r} has no parameter "
              f"{param!r} (known: {sorted(schema)})", file=sys.stderr)
        return 2
    outroot = _resolve_outdir(base_cfg, args.out)
    os.makedirs(outroot, exist_ok=True)
    rows = []
    worst = 0
    for raw in args.values.split(","):
        raw = raw.strip()
        if param in schema:
            values[f"problem.{param}"] = raw
        else:
            values[f"solver.{param}"] = raw
        try:
            cfg = validate_config(values)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        subdir = os.path.join(outroot, f"{param}_{raw}")
        code, summary = _run_once(cfg, subdir)
        worst = max(worst, code)
        if summary is None:
            return 3
        # for regularized solves the aggregate tracks the configured
        # problem's certificate at the returned path, not the solver's
        # internal (regularized) one
        cert = summary.get("certificate_unregularized",
                           summary["certificate"])
        rows.append((raw, cert, summary.get("oracle_error"),
                     summary["status"]))
    from .reporting import write_csv

    write_csv(os.path.join(outroot, "aggregate.csv"),
              [param, "certificate", "oracle_error", "status"],
              [(v, c, e if e is not None else "nan", s)
               for v, c, e, s in rows])
    print(f"aggregate -> {os.path.join(outroot, 'aggregate.csv')}")
    return worst


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="selfdual",
        description="certificate-carrying solvers for stationary and "
                    "evolution inclusions")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", type=str, default=None,
                        help="output directory (overrides OUT_DIR and config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="build, solve, and write a report")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="run an invariant suite")
    p_check.add_argument("suite", choices=["algebra", "operators",
                                           "problems", "all"])
    p_check.set_defaults(func=cmd_check)

    p_sweep = sub.add_parser("sweep", help="run a config across parameter "
                                           "values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values")
    p_sweep.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    np.seterr(all="ignore")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
