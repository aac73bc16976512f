"""Invariant suites behind the ``check`` subcommand.

Each check is a named measurement with a tolerance; suites bundle them by
theme (``algebra``: duality identities, ``operators``: structural defects,
``problems``: the shipped model problems).  Detector checks are inverted:
they pass when a deliberately broken input makes the measurement fire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex import Quadratic
from .lagrangian import (
    Basic,
    CustomBoundary,
    InitialValue,
    asd_defect,
    boundary_inequality_defect,
    lambda_regularize,
    oplus,
    selfdual_boundary_defect,
    shift,
    star,
)
from .operators import (
    BoundaryPair,
    ConservativeMap,
    LinearMap,
    adjoint_defect,
    boundary_skew_defect,
    conservativity_defect,
    sample_pairs,
    sample_vectors,
    skew_defect,
    vjp_defect,
)
from .space import Space


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool
    mode: str = "below"  # "below": value <= tol; "above": value > tol


def _check(name, value, tol, mode="below"):
    passed = value <= tol if mode == "below" else value > tol
    return CheckResult(name=name, value=float(value), tol=float(tol),
                       passed=bool(passed), mode=mode)


def _quadratic_lagrangian_family(seed=0):
    sp1 = Space.euclidean(1)
    sp2 = Space.euclidean(2)
    b2 = LinearMap(sp2, matrix=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    basic1 = Basic(Quadratic.isotropic(sp1, 1.0))
    basic2 = Basic(Quadratic(sp2, np.diag([1.0, 2.0])))
    return [
        ("basic", basic1, sp1),
        ("shift_skew", shift(basic2, b2), sp2),
        ("oplus", oplus(basic1, Basic(Quadratic.isotropic(sp1, 3.0))), sp1),
        ("star", star(basic1, Basic(Quadratic.isotropic(sp1, 2.0))), sp1),
        ("lambda_reg", lambda_regularize(basic1, 0.5), sp1),
    ]


def suite_algebra(rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    results = []
    for name, lag, sp in _quadratic_lagrangian_family():
        samples = [(sp.random(rng, 1.5), sp.random(rng, 1.5))
                   for _ in range(5)]
        results.append(_check(f"asd_defect[{name}]",
                              asd_defect(lag, samples), 1e-5))

    # the detector must fire on a non-anti-selfdual probe
    sp1 = Space.euclidean(1)

    from .lagrangian import Lagrangian

    class Broken(Lagrangian):
        def value(self, x, p):
            return 0.5 * float((x[0] + p[0]) ** 2)

    results.append(_check("asd_detector_fires",
                          asd_defect(Broken(sp1),
                                     [(np.ones(1), np.ones(1))]),
                          0.1, mode="above"))

    # boundary Lagrangians
    sp4 = Space.euclidean(4)
    worst_sd = 0.0
    for _ in range(20):
        ell = InitialValue(sp4, sp4.random(rng))
        pairs = [(sp4.random(rng), sp4.random(rng)) for _ in range(10)]
        worst_sd = max(worst_sd, selfdual_boundary_defect(ell, pairs))
    results.append(_check("boundary_selfdual[initial_value]", worst_sd,
                          1e-10))
    ell = InitialValue(sp4, sp4.random(rng))
    pairs = [(sp4.random(rng, 2.0), sp4.random(rng, 2.0))
             for _ in range(1000)]
    results.append(_check("boundary_inequality",
                          boundary_inequality_defect(ell, pairs), 1e-12))
    probe = CustomBoundary(Quadratic.isotropic(sp4, 2.0),
                           Quadratic.isotropic(sp4, 1.0))
    results.append(_check("boundary_detector_fires",
                          selfdual_boundary_defect(
                              probe, [(sp4.random(rng), sp4.random(rng))
                                      for _ in range(10)]),
                          1e-2, mode="above"))

    # Hamiltonian identities in dim 8
    sp8 = Space.euclidean(8)
    psi = Quadratic(sp8, np.diag(np.linspace(0.5, 3.0, 8)))
    lag8 = Basic(psi)
    other = Basic(Quadratic.isotropic(sp8, 1.5))
    combo = oplus(lag8, other)
    worst_diag, worst_temp, worst_sum = 0.0, 0.0, 0.0
    for _ in range(500):
        x, y = sp8.random(rng), sp8.random(rng)
        scale = 1.0 + abs(psi.value(x))
        hval = lag8.hamiltonian(x, -x)
        worst_diag = max(worst_diag, hval / scale)
        worst_temp = max(worst_temp, abs(hval) / scale)
        total = combo.hamiltonian(x, y)
        parts = lag8.hamiltonian(x, y) + other.hamiltonian(x, y)
        worst_sum = max(worst_sum,
                        abs(total - parts) / (1.0 + abs(parts)))
    results.append(_check("hamiltonian_negative_diagonal", worst_diag, 1e-9))
    results.append(_check("hamiltonian_tempered_diagonal", worst_temp, 1e-9))
    results.append(_check("hamiltonian_oplus_sum_rule", worst_sum, 1e-6))
    return results


def _sbp_time_derivative(n, h):
    q = np.zeros((n, n))
    for i in range(1, n - 1):
        q[i, i + 1] = 0.5
        q[i, i - 1] = -0.5
    q[0, 0], q[0, 1] = -0.5, 0.5
    q[-1, -1], q[-1, -2] = 0.5, -0.5
    weights = h * np.ones(n)
    weights[0] = weights[-1] = h / 2
    return q / weights[:, None], weights


def suite_operators(rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    results = []

    sp = Space.euclidean(2)
    canonical = LinearMap(sp, matrix=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    results.append(_check("skew[canonical]",
                          skew_defect(sp, canonical, sample_pairs(sp, rng, 50)),
                          1e-12))

    n, h = 33, 1.0 / 32
    d, weights = _sbp_time_derivative(n, h)
    spt = Space(n, np.diag(weights))
    bmap = LinearMap(spt, matrix=d)
    h1 = Space.euclidean(1)
    e0 = np.zeros((1, n)); e0[0, 0] = 1.0
    eT = np.zeros((1, n)); eT[0, -1] = 1.0
    bp = BoundaryPair(LinearMap(spt, h1, matrix=e0),
                      LinearMap(spt, h1, matrix=eT))
    results.append(_check("boundary_identity[time_derivative]",
                          boundary_skew_defect(spt, bmap, bp,
                                               sample_vectors(spt, rng, 50)),
                          1e-10))
    results.append(_check("adjoint_consistency[time_derivative]",
                          adjoint_defect(spt, bmap,
                                         sample_pairs(spt, rng, 50)),
                          1e-10))

    from .problems import SpectralGrid, build_transport_1d

    built = build_transport_1d(n=32, nu=1.0, m=2, a="linear", a0="zero",
                               f="sine")
    spx = built.problem.space
    results.append(_check("skew[split_transport]",
                          skew_defect(spx, built.problem.b_map,
                                      sample_pairs(spx, rng, 50)),
                          1e-11))
    results.append(_check("conservativity[quadratic_convection_1d]",
                          conservativity_defect(
                              spx, built.problem.lam,
                              sample_vectors(spx, rng, 50)),
                          1e-12))
    triples = [(spx.random(rng), spx.random(rng), spx.random(rng))
               for _ in range(10)]
    results.append(_check("vjp[quadratic_convection_1d]",
                          vjp_defect(built.problem.lam, triples), 1e-6))

    grid = SpectralGrid(16)
    spg = grid.space
    lam = ConservativeMap(spg, grid.convection, vjp=grid.convection_vjp)
    results.append(_check("conservativity[spectral_convection]",
                          conservativity_defect(
                              spg, lam, sample_vectors(spg, rng, 20)),
                          1e-10))
    div_sup = max(grid.divergence_sup(grid.convection(spg.random(rng)))
                  for _ in range(5))
    results.append(_check("divergence_free[spectral_convection]", div_sup,
                          1e-10))
    triples = [(grid.random_field(int(rng.integers(1 << 16)), amplitude=1.0),
                grid.random_field(int(rng.integers(1 << 16)), amplitude=1.0),
                grid.random_field(int(rng.integers(1 << 16)), amplitude=1.0))
               for _ in range(3)]
    results.append(_check("vjp[spectral_convection]",
                          vjp_defect(lam, triples), 1e-6))
    return results


def suite_problems(rng_seed=0):
    from .evolution import solve_marching_prox
    from .problems import (
        build_coupled_system_1d,
        build_heat_1d,
        build_nse2d_evolution,
        build_nse2d_stationary,
        build_transport_1d,
    )
    from .stationary import solve_minimize

    results = []

    built = build_heat_1d(n=16, nu=1.0, horizon=0.05, steps=8)
    report = solve_marching_prox(built.problem)
    resolvent = built.oracle.implicit_euler_path(built.problem.h,
                                                 built.problem.steps)
    space = built.problem.space
    results.append(_check("heat_1d[certificate]", report.certificate, 1e-8))
    results.append(_check(
        "heat_1d[vs_resolvent_oracle]",
        space.norm(report.x_final - resolvent[-1])
        / space.norm(resolvent[-1]), 1e-6))

    built = build_transport_1d(n=32, nu=0.5, m=2, a="constant", a0="zero",
                               f="sine")
    report = solve_minimize(built.problem, cert_tol=1e-8)
    ref = built.oracle.solve()
    space = built.problem.space
    results.append(_check("transport_1d[certificate]",
                          report.certificate / report.scale, 1e-8))
    results.append(_check("transport_1d[vs_newton]",
                          space.norm(report.x - ref) / space.norm(ref), 1e-6))

    built = build_nse2d_stationary(n_modes=16, nu=1.0,
                                   forcing="taylor_green")
    tg = built.grid.taylor_green()
    results.append(_check("nse2d_stationary[certificate_at_vortex]",
                          built.problem.certificate(tg), 1e-8))
    for key, value in built.problem.defects.items():
        results.append(_check(f"nse2d_stationary[defect_{key}]", value, 1e-8))

    built = build_nse2d_evolution(n_modes=16, nu=0.5, horizon=0.1, steps=8)
    report = solve_marching_prox(built.problem)
    results.append(_check("nse2d_evolution[certificate]",
                          report.certificate / report.scale, 1e-8))
    results.append(_check("nse2d_evolution[max_step_residual]",
                          float(np.max(report.per_step_residuals)), 1e-8))

    built = build_coupled_system_1d(n=16, f="sine", g="zero",
                                    forcing_amplitude=0.1)
    report = solve_minimize(built.problem, cert_tol=1e-8)
    ref = built.oracle.solve()
    space = built.problem.space
    results.append(_check("coupled_1d[certificate]",
                          report.certificate / report.scale, 1e-8))
    results.append(_check("coupled_1d[vs_newton]",
                          space.norm(report.x - ref) / space.norm(ref), 1e-6))
    return results


SUITES = {
    "algebra": suite_algebra,
    "operators": suite_operators,
    "problems": suite_problems,
}


def run_checks(which="all", rng_seed=0):
    names = list(SUITES) if which == "all" else [which]
    if any(n not in SUITES for n in names):
        raise KeyError(f"unknown suite {which!r}; choose from "
                       f"{sorted(SUITES)} or 'all'")
    results = []
    for name in names:
        results.extend(SUITES[name](rng_seed))
    return results


def format_results(results):
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        rel = "<=" if r.mode == "below" else "> "
        verdict = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {r.value:12.3e} {rel} "
                     f"{r.tol:8.1e}  {verdict}")
    return "\n".join(lines)
