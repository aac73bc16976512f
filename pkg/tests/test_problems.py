import numpy as np
import pytest

from selfdual.evolution import solve_marching_prox, solve_path_minimize
from selfdual.operators import (
    conservativity_defect,
    sample_pairs,
    sample_vectors,
    skew_defect,
    vjp_defect,
)
from selfdual.problems import (
    BuildError,
    SpectralGrid,
    build_by_name,
    build_coupled_system_1d,
    build_heat_1d,
    build_nse2d_evolution,
    build_nse2d_stationary,
    build_transport_1d,
    convection_refinement_stability,
)
from selfdual.stationary import solve_minimize, solve_picard


def rel_error(space, x, ref):
    return space.norm(x - ref) / max(space.norm(ref), 1e-300)


# -- heat ------------------------------------------------------------------------


def test_heat_exact_decay_dirichlet():
    built = build_heat_1d(n=64, nu=1.0, horizon=0.1, steps=64)
    report = solve_marching_prox(built.problem)
    assert report.converged
    exact = built.oracle.exact_continuum(0.1)
    err = rel_error(built.problem.space, report.x_final, exact)
    # implicit-Euler time error ~ (nu pi^2)^2 T h / 2 ~ 8e-3 at this step count
    assert err <= 2e-2


def test_heat_zero_initial_datum():
    built = build_heat_1d(n=16, nu=1.0, v0="zero", horizon=0.1, steps=8)
    report = solve_marching_prox(built.problem)
    assert np.allclose(report.path.nodes, 0.0, atol=1e-12)
    assert report.certificate <= 1e-14


def test_heat_time_error_first_order():
    errors = []
    for steps in (16, 32, 64):
        built = build_heat_1d(n=32, nu=1.0, horizon=0.1, steps=steps)
        report = solve_marching_prox(built.problem)
        semi = built.oracle.exact_semidiscrete(0.1)
        errors.append(rel_error(built.problem.space, report.x_final, semi))
    assert 1.8 <= errors[0] / errors[1] <= 2.2
    assert 1.8 <= errors[1] / errors[2] <= 2.2


def test_heat_periodic_variant():
    built = build_heat_1d(n=32, nu=0.05, bc="periodic", horizon=0.2, steps=32)
    report = solve_marching_prox(built.problem)
    semi = built.oracle.exact_semidiscrete(0.2)
    assert rel_error(built.problem.space, report.x_final, semi) <= 2e-2


def test_heat_joint_minimize_agrees_with_marching():
    built = build_heat_1d(n=8, nu=1.0, horizon=0.05, steps=4)
    march = solve_marching_prox(built.problem)
    joint = solve_path_minimize(built.problem, cert_tol=1e-12, max_iter=4000)
    assert march.converged and joint.converged
    assert np.max(np.abs(march.path.nodes - joint.path.nodes)) <= 1e-6


def test_heat_grid_refinement_halves_error():
    # time step coupled to the grid: the first-order time error dominates,
    # so each doubling of n halves the total error against the continuum
    errs = []
    for n in (32, 64, 128):
        built = build_heat_1d(n=n, nu=1.0, horizon=0.05, steps=n)
        report = solve_marching_prox(built.problem)
        exact = built.oracle.exact_continuum(0.05)
        errs.append(rel_error(built.problem.space, report.x_final, exact))
    assert 1.7 <= errs[0] / errs[1] <= 2.4
    assert 1.7 <= errs[1] / errs[2] <= 2.4


def test_heat_rejects_bad_inputs():
    with pytest.raises(BuildError):
        build_heat_1d(n=2, nu=1.0)
    with pytest.raises(BuildError):
        build_heat_1d(n=16, nu=1.0, bc="neumann")
    with pytest.raises(BuildError):
        build_heat_1d(n=16, nu=1.0, v0="vortex")


# -- transport --------------------------------------------------------------------


def test_transport_matches_newton_constant_coefficients():
    built = build_transport_1d(n=64, nu=0.5, m=2, a="constant", a0="zero",
                               f="sine")
    report = solve_minimize(built.problem, cert_tol=1e-9)
    assert report.converged
    newton_x = built.oracle.solve()
    assert rel_error(built.problem.space, report.x, newton_x) <= 1e-6


def test_transport_pure_gradient_case():
    built = build_transport_1d(n=32, nu=1.0, m=2, a="zero", a0="zero",
                               f="sine", convection=False)
    report = solve_minimize(built.problem, cert_tol=1e-10)
    assert report.converged
    assert report.certificate <= 1e-10 * report.scale
    # B = 0 and Lambda = 0: the problem is a plain convex minimization
    assert skew_defect(built.problem.space, built.problem.b_map,
                       sample_pairs(built.problem.space,
                                    np.random.default_rng(0), 5)) == 0.0


def test_transport_quartic_reaction():
    built = build_transport_1d(n=48, nu=0.5, m=4, a="linear", a0="zero",
                               f="sine")
    report = solve_minimize(built.problem, cert_tol=1e-9)
    assert report.converged
    newton_x = built.oracle.solve()
    assert rel_error(built.problem.space, report.x, newton_x) <= 1e-6


def test_transport_convexity_gate_names_node():
    # a(x) = -x has div a / 2 = -1/2 < 0 everywhere
    with pytest.raises(BuildError, match="node 0"):
        build_transport_1d(n=16, nu=1.0, m=2, a=lambda x: -x, a0="zero",
                           f="sine")


def test_transport_operator_structure():
    built = build_transport_1d(n=32, nu=1.0, m=2, a="linear", a0="zero",
                               f="sine")
    space = built.problem.space
    rng = np.random.default_rng(1)
    assert skew_defect(space, built.problem.b_map,
                       sample_pairs(space, rng, 30)) <= 1e-12
    assert conservativity_defect(space, built.problem.lam,
                                 sample_vectors(space, rng, 30)) <= 1e-13
    triples = [(space.random(rng), space.random(rng), space.random(rng))
               for _ in range(5)]
    assert vjp_defect(built.problem.lam, triples) <= 1e-6


# -- stationary flow ---------------------------------------------------------------


def test_nse_taylor_green_exact():
    built = build_nse2d_stationary(n_modes=24, nu=1.0, forcing="taylor_green")
    tg = built.grid.taylor_green()
    assert built.problem.certificate(tg) <= 1e-8
    report = solve_minimize(built.problem, cert_tol=1e-10, initial=None)
    assert report.converged
    assert rel_error(built.problem.space, report.x, tg) <= 1e-6


def test_nse_taylor_green_field_is_represented():
    grid = SpectralGrid(16)
    u1, u2 = grid.grids(grid.taylor_green())
    xs = 2 * np.pi * np.arange(16) / 16
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    assert np.allclose(u1, np.sin(xx) * np.cos(yy), atol=1e-12)
    assert np.allclose(u2, -np.cos(xx) * np.sin(yy), atol=1e-12)


def test_nse_convection_of_taylor_green_vanishes():
    grid = SpectralGrid(24)
    conv = grid.convection(grid.taylor_green())
    assert np.max(np.abs(conv)) <= 1e-12  # pure gradient, killed by projection


def test_nse_zero_forcing_zero_solution():
    built = build_nse2d_stationary(n_modes=16, nu=1.0, forcing="zero")
    report = solve_minimize(built.problem)
    assert built.problem.space.norm(report.x) <= 1e-8
    assert report.certificate <= 1e-12


def test_nse_random_forcing_matches_picard():
    built = build_nse2d_stationary(n_modes=16, nu=1.0,
                                   forcing="random_seeded(3)")
    report = solve_minimize(built.problem, cert_tol=1e-9)
    assert report.converged
    picard_x = built.oracle.solve()
    assert rel_error(built.problem.space, report.x, picard_x) <= 1e-6


def test_nse_conservativity_and_divergence():
    grid = SpectralGrid(16)
    rng = np.random.default_rng(2)
    space = grid.space
    for _ in range(5):
        u = grid.random_field(rng.integers(10_000), amplitude=1.0)
        val = abs(space.inner(grid.convection(u), u))
        assert val <= 1e-10 * (1.0 + space.inner(u, u))
        assert grid.divergence_sup(grid.convection(u)) <= 1e-12


def test_nse_vjp_is_gram_adjoint():
    grid = SpectralGrid(12)
    space = grid.space
    lam = __import__("selfdual.operators", fromlist=["ConservativeMap"]) \
        .ConservativeMap(space, grid.convection, vjp=grid.convection_vjp)
    rng = np.random.default_rng(3)
    triples = []
    for _ in range(4):
        triples.append((grid.random_field(rng.integers(10_000), amplitude=1.0),
                        grid.random_field(rng.integers(10_000), amplitude=1.0),
                        grid.random_field(rng.integers(10_000), amplitude=1.0)))
    assert vjp_defect(lam, triples, h=1e-6) <= 1e-6


def test_nse_low_viscosity_large_forcing_picard_fails():
    # a strong generic forcing at low viscosity sits outside the fixed-point
    # map's contractive regime (a Taylor-Green forcing would not: its
    # solution has zero convection and Picard lands on it in one step)
    grid = SpectralGrid(16)
    strong = 5.0 * grid.random_field(5, amplitude=1.0)
    prob = build_nse2d_stationary(n_modes=16, nu=0.05, forcing=strong)
    report = solve_picard(prob.problem, damping=1.0, max_iter=200)
    assert report.status == "failed"


def test_nse_rejects_bad_forcing():
    grid = SpectralGrid(16)
    with pytest.raises(BuildError):
        build_nse2d_stationary(n_modes=16, nu=1.0, forcing="tornado")


def test_nse_synthetic_perturbation_keeps_structure():
    built = build_nse2d_stationary(n_modes=12, nu=1.0, forcing="zero",
                                   perturbation=(0.05, 0.1, 7))
    space = built.problem.space
    rng = np.random.default_rng(4)
    assert skew_defect(space, built.problem.b_map,
                       sample_pairs(space, rng, 10)) <= 1e-10
    report = solve_minimize(built.problem)
    assert report.converged


def test_nse_refinement_stability():
    grid = SpectralGrid(12)
    u = grid.random_field(11, amplitude=0.5)
    assert convection_refinement_stability(u, 12, 24) <= 1e-10


# -- evolution flow ----------------------------------------------------------------


def test_nse_evolution_decaying_vortex():
    built = build_nse2d_evolution(n_modes=16, nu=0.5, horizon=0.2, steps=32)
    report = solve_marching_prox(built.problem)
    assert report.converged
    exact = built.oracle.exact_path(built.problem.times())
    err = rel_error(built.problem.space, report.x_final, exact[-1])
    assert err <= 0.05


def test_nse_evolution_first_order_and_energy_law():
    errors = []
    for steps in (8, 16, 32):
        built = build_nse2d_evolution(n_modes=16, nu=0.5, horizon=0.2,
                                      steps=steps)
        report = solve_marching_prox(built.problem)
        exact_final = built.oracle.exact_path(built.problem.times())[-1]
        errors.append(rel_error(built.problem.space, report.x_final,
                                exact_final))
    assert 1.8 <= errors[0] / errors[1] <= 2.2
    assert 1.8 <= errors[1] / errors[2] <= 2.2


def test_nse_evolution_zero_data_zero_path():
    built = build_nse2d_evolution(n_modes=16, nu=1.0, v0="zero",
                                  forcing="zero", steps=4)
    report = solve_marching_prox(built.problem)
    assert np.allclose(report.path.nodes, 0.0, atol=1e-12)


# -- coupled system ----------------------------------------------------------------


def test_coupled_zero_forcing_zero_solution():
    built = build_coupled_system_1d(n=16, f="zero", g="zero")
    report = solve_minimize(built.problem)
    assert built.problem.space.norm(report.x) <= 1e-8
    assert report.certificate <= 1e-12


def test_coupled_matches_newton_default():
    built = build_coupled_system_1d(n=32, p=2, q=2, m=2, c=1.0,
                                    f="sine", g="zero",
                                    forcing_amplitude=0.1)
    report = solve_minimize(built.problem, cert_tol=1e-9)
    assert report.converged
    newton_x = built.oracle.solve()
    assert rel_error(built.problem.space, report.x, newton_x) <= 1e-6


def test_coupled_nontrivial_c_and_transport():
    built = build_coupled_system_1d(n=24, p=2, q=2, m=2, c=2.0,
                                    b1="linear", b2="linear",
                                    f="sine", g="sine",
                                    forcing_amplitude=0.05)
    space = built.problem.space
    rng = np.random.default_rng(5)
    assert skew_defect(space, built.problem.b_map,
                       sample_pairs(space, rng, 20)) <= 1e-11
    assert conservativity_defect(space, built.problem.lam,
                                 sample_vectors(space, rng, 20)) <= 1e-12
    report = solve_minimize(built.problem, cert_tol=1e-9)
    assert report.converged
    newton_x = built.oracle.solve()
    assert rel_error(space, report.x, newton_x) <= 1e-6


def test_coupled_conservativity_exact_identity():
    built = build_coupled_system_1d(n=8, m=2, c=1.5)
    space = built.problem.space
    rng = np.random.default_rng(6)
    for _ in range(20):
        z = space.random(rng, 3.0)
        assert abs(space.inner(built.problem.lam(z), z)) <= 1e-12 * (
            1.0 + space.inner(z, z))


def test_coupled_mixed_exponents():
    built = build_coupled_system_1d(n=16, p=3.0, q=4.0, m=2, c=1.0,
                                    f="sine", g="sine",
                                    forcing_amplitude=0.05)
    report = solve_minimize(built.problem, cert_tol=1e-8)
    assert report.converged
    newton_x = built.oracle.solve()
    assert rel_error(built.problem.space, report.x, newton_x) <= 1e-6


def test_coupled_sign_gate():
    with pytest.raises(BuildError):
        build_coupled_system_1d(n=16, b1=lambda x: -x)


def test_coupled_vjp_consistency():
    built = build_coupled_system_1d(n=8, m=3, c=1.3)
    space = built.problem.space
    rng = np.random.default_rng(7)
    triples = [(space.random(rng), space.random(rng), space.random(rng))
               for _ in range(6)]
    assert vjp_defect(built.problem.lam, triples) <= 1e-5


# -- registry ----------------------------------------------------------------------


def test_build_by_name_roundtrip():
    built = build_by_name("heat_1d", {"n": 8, "nu": 1.0})
    assert built.name == "heat_1d"
    with pytest.raises(BuildError):
        build_by_name("laplace_3d", {})


def test_exact_solution_path_has_small_functional():
    """The exact flow sampled at the nodes scores O(h) on the quadrature form.

    The gap-form certificate is quadratic in the per-step equation residual,
    so it decays one order faster (O(h^2)); the plain quadrature carries the
    O(h) backward-difference dissipation.  Both are measured.
    """
    from selfdual.evolution import DiscretePath, path_functional, path_quadrature

    quad_vals, gap_vals = [], []
    for steps in (16, 32, 64):
        built = build_heat_1d(n=32, nu=1.0, horizon=0.1, steps=steps)
        times = built.problem.times()
        nodes = built.oracle.exact_path(times)
        path = DiscretePath(nodes, built.problem.h)
        quad_vals.append(abs(path_quadrature(built.problem, path)))
        gap_vals.append(path_functional(built.problem, path))
    assert 1.7 <= quad_vals[0] / quad_vals[1] <= 2.4
    assert 1.7 <= quad_vals[1] / quad_vals[2] <= 2.4
    assert 3.0 <= gap_vals[0] / gap_vals[1] <= 5.0
    assert 3.0 <= gap_vals[1] / gap_vals[2] <= 5.0
    assert all(v >= 0.0 for v in gap_vals)


def test_nse_energy_matches_exact_decay_law():
    built = build_nse2d_evolution(n_modes=16, nu=0.5, horizon=0.2, steps=32)
    report = solve_marching_prox(built.problem)
    space = built.problem.space
    times = built.problem.times()
    h = built.problem.h
    worst = 0.0
    e0 = built.oracle.energy(0.0)
    for k, t in enumerate(times):
        e_discrete = 0.5 * space.inner(report.path.nodes[k],
                                       report.path.nodes[k])
        worst = max(worst, abs(e_discrete - built.oracle.energy(t)))
    assert worst <= 5.0 * h * e0


def test_nse_evolution_joint_minimize_reproduces_decay():
    built = build_nse2d_evolution(n_modes=8, nu=0.5, horizon=0.1, steps=4)
    report = solve_path_minimize(built.problem, cert_tol=1e-10, max_iter=5000)
    assert report.converged
    exact = built.oracle.exact_path(built.problem.times())
    sp = built.problem.space
    err = sp.norm(report.x_final - exact[-1]) / sp.norm(exact[-1])
    assert err <= 5.0 * built.problem.h


def test_nse_picard_solver_agrees_with_minimize():
    built = build_nse2d_stationary(n_modes=16, nu=1.0,
                                   forcing="random_seeded(5)",
                                   forcing_amplitude=0.05)
    pic = solve_picard(built.problem, damping=1.0, max_iter=500)
    mini = solve_minimize(built.problem, cert_tol=1e-10)
    assert pic.converged and mini.converged
    sp = built.problem.space
    assert sp.norm(pic.x - mini.x) <= 1e-8 * (1.0 + sp.norm(mini.x))
