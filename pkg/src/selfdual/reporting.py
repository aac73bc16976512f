"""Report files: a deterministic summary, delimited payloads, and figures.

Each run writes into its own directory:

* ``summary.json``  -- fixed field order, every float printed with 17
  significant digits; byte-identical across repeated runs with the same
  config and seed (wall time deliberately lives elsewhere);
* ``solution.csv`` / ``path.csv``  -- the solution payload;
* ``history.csv``   -- iteration history when the solver recorded one;
* ``timing.json``   -- wall time, excluded from the determinism contract;
* ``*.png``         -- rendered figures next to the delimited output (can be
  switched off with ``output.figures = false``).

After writing, the summary is read back and its certificate compared against
a recomputation from the problem and the stored solution; a mismatch beyond
1e-12 of scale raises.
"""

from __future__ import annotations

import json
import os

import numpy as np


class ReportIntegrityError(RuntimeError):
    """The written summary disagrees with a recomputed certificate."""


def fmt(x):
    """Canonical 17-significant-digit decimal rendering."""
    return format(float(x), ".17g")


def _render_json(obj, indent=0):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  "{k}": {_render_json(v, indent + 1)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_render_json(v, indent) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            return f'"{float(obj)}"'
        return fmt(obj)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_render_json(obj) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if isinstance(v, (float, np.floating))
                              else str(v) for v in row) + "\n")


def summary_for_stationary(cfg, report, defects, oracle_error=None):
    summary = {
        "problem": cfg.problem,
        "solver": cfg.solver,
        "seed": cfg.seed,
        "params": {k: cfg.problem_params[k]
                   for k in sorted(cfg.problem_params)},
        "status": report.status,
        "certificate": float(report.certificate),
        "certificate_scale": float(report.scale),
        "inclusion_residual": float(report.inclusion_residual),
        "residual_certificate_ratio": float(report.residual_certificate_ratio)
        if np.isfinite(report.certificate) else None,
        "iterations": int(report.iterations),
        "defects": {k: float(v) for k, v in sorted(defects.items())},
    }
    if oracle_error is not None:
        summary["oracle_error"] = float(oracle_error)
    return summary


def summary_for_path(cfg, report, defects, oracle_error=None):
    residuals = report.per_step_residuals
    summary = {
        "problem": cfg.problem,
        "solver": cfg.solver,
        "seed": cfg.seed,
        "params": {k: cfg.problem_params[k]
                   for k in sorted(cfg.problem_params)},
        "status": report.status,
        "certificate": float(report.certificate),
        "certificate_scale": float(report.scale),
        "max_step_gap": float(np.max(report.gaps)) if len(report.gaps) else 0.0,
        "max_step_residual": float(np.max(residuals))
        if residuals is not None and len(residuals) else None,
        "energy_defect": float(report.energy_defect),
        "iterations": int(report.iterations),
        "defects": {k: float(v) for k, v in sorted(defects.items())},
    }
    if oracle_error is not None:
        summary["oracle_error"] = float(oracle_error)
    if "certificates" in report.extra:
        summary["certificate_unregularized"] = float(
            report.extra["certificate_unregularized"])
        summary["lambda_schedule"] = [float(v)
                                      for v in report.extra["schedule"]]
        summary["lambda_certificates"] = [
            float(v) for v in report.extra["certificates"]]
        summary["lambda_velocity_sup_norms"] = [
            float(v) for v in report.extra["velocity_sup_norms"]]
    return summary


def write_stationary_report(outdir, cfg, built, report):
    os.makedirs(outdir, exist_ok=True)
    defects = built.problem.defects
    oracle_error = _stationary_oracle_error(built, report)
    summary = summary_for_stationary(cfg, report, defects, oracle_error)
    write_json(os.path.join(outdir, "summary.json"), summary)
    write_csv(os.path.join(outdir, "solution.csv"), ["index", "value"],
              [(i, v) for i, v in enumerate(report.x)])
    if report.history:
        write_csv(os.path.join(outdir, "history.csv"),
                  ["iteration", "certificate", "gradient_norm"],
                  [(i, a, b) for i, (a, b) in enumerate(report.history)])
    write_json(os.path.join(outdir, "timing.json"),
               {"wall_time_s": float(report.wall_time_s)})
    _verify_summary(outdir, lambda x: built.problem.certificate(x),
                    report.x, report.scale)
    if cfg.figures:
        render_stationary_figures(outdir, report)
    return summary


def write_path_report(outdir, cfg, built, report):
    os.makedirs(outdir, exist_ok=True)
    defects = built.problem.defects
    oracle_error = _path_oracle_error(built, report)
    summary = summary_for_path(cfg, report, defects, oracle_error)
    write_json(os.path.join(outdir, "summary.json"), summary)
    times = built.problem.times()
    rows = []
    gaps = np.concatenate([[0.0], report.gaps]) if len(report.gaps) else \
        np.zeros(len(times))
    for k, t in enumerate(times[: report.path.nodes.shape[0]]):
        rows.append((t, *report.path.nodes[k], gaps[k]))
    header = (["t"] + [f"u{i}" for i in range(report.path.nodes.shape[1])]
              + ["step_gap"])
    write_csv(os.path.join(outdir, "path.csv"), header, rows)
    write_json(os.path.join(outdir, "timing.json"),
               {"wall_time_s": float(report.wall_time_s)})

    from .evolution import _certificate_and_gaps, report_step_lagrangians

    steps = report_step_lagrangians(built.problem, report)
    _verify_summary(
        outdir,
        lambda nodes: _certificate_and_gaps(built.problem, report.path,
                                            steps)[0],
        report.path.nodes, report.scale)
    if cfg.figures:
        render_path_figures(outdir, built, report)
    return summary


def _verify_summary(outdir, recompute, solution, scale):
    with open(os.path.join(outdir, "summary.json"), encoding="utf-8") as fh:
        stored = json.load(fh)
    if stored["status"] in ("failed", "max_iter"):
        return
    recomputed = float(recompute(solution))
    if abs(recomputed - float(stored["certificate"])) > 1e-12 * max(scale, 1.0):
        raise ReportIntegrityError(
            f"summary certificate {stored['certificate']} disagrees with "
            f"recomputation {recomputed}")


def _stationary_oracle_error(built, report):
    oracle = built.oracle
    if oracle is None or not hasattr(oracle, "solve") or not report.converged:
        return None
    try:
        ref = oracle.solve()
    except Exception:
        return None
    space = built.problem.space
    return space.norm(report.x - ref) / max(space.norm(ref), 1e-300)


def _path_oracle_error(built, report):
    oracle = built.oracle
    if oracle is None or not hasattr(oracle, "exact_path") \
            or not report.converged:
        return None
    times = built.problem.times()
    exact = oracle.exact_path(times)
    space = built.problem.space
    num = max(space.norm(report.path.nodes[k] - exact[k])
              for k in range(len(times)))
    den = max(max(space.norm(exact[k]) for k in range(len(times))), 1e-300)
    return num / den


# -- figures --------------------------------------------------------------------


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_stationary_figures(outdir, report):
    plt = _matplotlib()
    if report.history:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        vals = np.array([max(v, 1e-300) for v, _ in report.history])
        gnorms = np.array([max(g, 1e-300) for _, g in report.history])
        ax.semilogy(vals, label="certificate")
        ax.semilogy(gnorms, label="gradient norm", linestyle="--")
        ax.set_xlabel("iteration")
        ax.legend(frameon=False)
        ax.set_title("convergence")
        fig.tight_layout()
        fig.savefig(os.path.join(outdir, "convergence.png"), dpi=130)
        plt.close(fig)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(report.x, lw=1.0)
    ax.set_xlabel("coordinate index")
    ax.set_ylabel("value")
    ax.set_title("solution")
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "solution.png"), dpi=130)
    plt.close(fig)


def render_path_figures(outdir, built, report):
    plt = _matplotlib()
    problem = built.problem
    times = problem.times()[: report.path.nodes.shape[0]]
    space = problem.space
    energy = [0.5 * space.inner(u, u) for u in report.path.nodes]

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(times, energy, label="discrete")
    oracle = built.oracle
    if oracle is not None and hasattr(oracle, "energy"):
        ax.plot(times, [oracle.energy(t) for t in times], "--",
                label="exact")
    elif oracle is not None and hasattr(oracle, "exact_path"):
        exact = oracle.exact_path(times)
        ax.plot(times, [0.5 * space.inner(u, u) for u in exact], "--",
                label="exact")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "energy.png"), dpi=130)
    plt.close(fig)

    if len(report.gaps):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.semilogy(times[1:], np.maximum(report.gaps, 1e-300), ".-")
        ax.set_xlabel("t")
        ax.set_ylabel("step Fenchel gap")
        fig.tight_layout()
        fig.savefig(os.path.join(outdir, "gaps.png"), dpi=130)
        plt.close(fig)
