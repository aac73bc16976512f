import numpy as np
import pytest

from selfdual.convex import Quadratic
from selfdual.evolution import (
    DiscretePath,
    PathProblem,
    energy_identity_defect,
    lambda_flow,
    path_functional,
    path_quadrature,
    solve_marching_prox,
    solve_path_minimize,
)
from selfdual.operators import ConservativeMap, LinearMap
from selfdual.space import Space


def scalar_flow_problem(v0=1.0, horizon=1.0, steps=1):
    sp = Space.euclidean(1)
    return PathProblem(space=sp, phi=Quadratic.isotropic(sp, 1.0),
                       b_map=LinearMap.zero(sp), lam=ConservativeMap.zero(sp),
                       f=np.zeros(1), v0=np.array([float(v0)]),
                       horizon=horizon, steps=steps)


def linear_flow_problem(dim=3, seed=0, horizon=0.5, steps=8):
    rng = np.random.default_rng(seed)
    sp = Space.euclidean(dim)
    a = rng.standard_normal((dim, dim))
    q = a @ a.T / dim + np.eye(dim)
    v0 = rng.standard_normal(dim)
    return PathProblem(space=sp, phi=Quadratic(sp, q),
                       b_map=LinearMap.zero(sp), lam=ConservativeMap.zero(sp),
                       f=np.zeros(dim), v0=v0, horizon=horizon, steps=steps), q


# -- path functional ----------------------------------------------------------


def test_single_step_closed_form_minimizer():
    """For N=1, h=1, phi=u^2/2, v0=1: minimizer is u0=1, u1=1/2, certificate 0."""
    prob = scalar_flow_problem()
    report = solve_path_minimize(prob, cert_tol=1e-12)
    assert report.converged
    assert np.allclose(report.path.nodes.ravel(), [1.0, 0.5], atol=1e-7)
    assert report.certificate <= 1e-12
    # the plain quadrature sits the telescoping term below zero there
    quad = path_quadrature(prob, report.path)
    assert quad == pytest.approx(-0.125, abs=1e-6)
    assert path_functional(prob, report.path) == pytest.approx(
        quad + 0.5 * (0.5 - 1.0) ** 2, abs=1e-9)


def test_zero_initial_data_gives_zero_path():
    prob = scalar_flow_problem(v0=0.0, steps=4)
    path = DiscretePath.constant(prob, value=np.zeros(1))
    assert path_functional(prob, path) == pytest.approx(0.0, abs=1e-15)
    report = solve_path_minimize(prob)
    assert np.allclose(report.path.nodes, 0.0, atol=1e-9)


def test_path_functional_nonnegative_for_random_paths():
    prob, _ = linear_flow_problem()
    rng = np.random.default_rng(1)
    for _ in range(25):
        nodes = rng.standard_normal((prob.steps + 1, prob.space.dim))
        val = path_functional(prob, DiscretePath(nodes, prob.h))
        assert val >= -1e-12 * (1.0 + abs(val))


def test_certificate_gradient_matches_fd():
    prob, _ = linear_flow_problem(dim=2, steps=3)
    from selfdual.evolution import _certificate_and_gaps, _certificate_gradient

    rng = np.random.default_rng(2)
    nodes = rng.standard_normal((4, 2))
    path = DiscretePath(nodes, prob.h)
    steps = prob.step_lagrangians()
    grad = _certificate_gradient(prob, path, steps)
    h = 1e-6
    for k in range(4):
        for i in range(2):
            bump = nodes.copy()
            bump[k, i] += h
            up = _certificate_and_gaps(prob, DiscretePath(bump, prob.h), steps)[0]
            bump[k, i] -= 2 * h
            dn = _certificate_and_gaps(prob, DiscretePath(bump, prob.h), steps)[0]
            assert (up - dn) / (2 * h) == pytest.approx(grad[k, i], abs=1e-5)


# -- marching oracle -----------------------------------------------------------


def test_marching_matches_resolvent_recursion():
    prob, q = linear_flow_problem(dim=3, steps=6)
    report = solve_marching_prox(prob)
    assert report.converged
    # closed-form oracle: u_k = (I + h Q)^-1 u_{k-1}
    u = prob.v0.copy()
    resolvent = np.linalg.inv(np.eye(3) + prob.h * q)
    for k in range(1, prob.steps + 1):
        u = resolvent @ u
        assert np.allclose(report.path.nodes[k], u, atol=1e-8)
    assert np.max(report.per_step_residuals) <= 1e-8
    assert report.certificate <= 1e-10 * report.scale


def test_marching_agrees_with_path_minimize():
    prob, _ = linear_flow_problem(dim=2, steps=4)
    march = solve_marching_prox(prob)
    joint = solve_path_minimize(prob, cert_tol=1e-12, max_iter=5000)
    assert march.converged and joint.converged
    assert np.max(np.abs(march.path.nodes - joint.path.nodes)) <= 1e-7


def test_marching_initial_condition_recovery():
    prob, _ = linear_flow_problem(dim=3, steps=5)
    report = solve_marching_prox(prob)
    u0_gap = prob.space.norm(report.path.nodes[0] - prob.v0)
    assert u0_gap <= np.sqrt(max(report.certificate, 0.0)) + 1e-12


# -- energy identity ------------------------------------------------------------


def test_energy_defect_zero_path():
    prob = scalar_flow_problem(v0=0.0, steps=4)
    path = DiscretePath.constant(prob, value=np.zeros(1))
    assert energy_identity_defect(prob, path) == pytest.approx(0.0, abs=1e-15)


def test_energy_defect_first_order_in_h():
    defects = []
    for steps in (16, 32, 64):
        prob, _ = linear_flow_problem(dim=3, seed=3, horizon=0.5, steps=steps)
        report = solve_marching_prox(prob)
        defects.append(energy_identity_defect(prob, report.path))
    r1 = defects[0] / defects[1]
    r2 = defects[1] / defects[2]
    assert 1.8 <= r1 <= 2.2
    assert 1.8 <= r2 <= 2.2


# -- per-step gaps ----------------------------------------------------------------


def test_per_step_gaps_nonnegative_and_decompose():
    prob, _ = linear_flow_problem(dim=2, seed=4, steps=6)
    rng = np.random.default_rng(5)
    nodes = rng.standard_normal((prob.steps + 1, 2))
    path = DiscretePath(nodes, prob.h)
    from selfdual.evolution import _certificate_and_gaps

    cert, gaps, boundary = _certificate_and_gaps(prob, path)
    assert np.all(gaps >= -1e-12 * (1.0 + np.abs(gaps)))
    assert cert == pytest.approx(np.sum(gaps) + boundary, rel=1e-12)
    assert boundary == pytest.approx(
        prob.space.inner(nodes[0] - prob.v0, nodes[0] - prob.v0))


# -- lambda flow ------------------------------------------------------------------


def test_lambda_flow_quadratic_matches_yosida_recursion():
    """Single lambda: the flow marches with the Yosida-regularized operator."""
    prob, q = linear_flow_problem(dim=2, seed=6, horizon=0.4, steps=4)
    lam = 0.3
    report = lambda_flow(prob, [lam], cert_tol=1e-11, max_iter=5000)
    assert report.converged
    # closed form: q_lam = q (I + lam q)^-1, then resolvent recursion in q_lam
    qlam = q @ np.linalg.inv(np.eye(2) + lam * q)
    u = prob.v0.copy()
    resolvent = np.linalg.inv(np.eye(2) + prob.h * qlam)
    for k in range(1, prob.steps + 1):
        u = resolvent @ u
        assert np.allclose(report.path.nodes[k], u, atol=1e-6)


def test_lambda_flow_approaches_unregularized():
    prob, _ = linear_flow_problem(dim=2, seed=7, horizon=0.3, steps=4)
    exact = solve_marching_prox(prob)
    report = lambda_flow(prob, [1.0, 0.1, 0.01, 0.001], cert_tol=1e-11,
                         max_iter=5000)
    gap = np.max(np.abs(report.path.nodes - exact.path.nodes))
    assert gap <= 5e-3
    assert len(report.extra["certificates"]) == 4
    assert len(report.extra["velocity_sup_norms"]) == 4


def test_lambda_flow_velocity_bound_uniform():
    prob, _ = linear_flow_problem(dim=2, seed=8, horizon=0.3, steps=6)
    report = lambda_flow(prob, [1.0, 0.1, 0.01], cert_tol=1e-11, max_iter=5000)
    sups = np.array(report.extra["velocity_sup_norms"])
    first_vel = prob.space.norm(solve_marching_prox(prob).path.velocity(1))
    assert np.all(sups <= 2.0 * max(first_vel, 1e-12) + 1e-9)


def test_lambda_flow_rejects_bad_schedule():
    prob = scalar_flow_problem()
    with pytest.raises(ValueError):
        lambda_flow(prob, [])
    with pytest.raises(ValueError):
        lambda_flow(prob, [0.1, 1.0])
    with pytest.raises(ValueError):
        lambda_flow(prob, [1.0, -0.1])


def test_time_dependent_phi_family():
    """phi(t) = (1 + t) |u|^2 / 2 marches with the matching resolvent."""
    sp = Space.euclidean(2)

    def phi_of_t(t):
        return Quadratic.isotropic(sp, 1.0 + t)

    prob = PathProblem(space=sp, phi=phi_of_t, b_map=LinearMap.zero(sp),
                       lam=ConservativeMap.zero(sp), f=np.zeros(2),
                       v0=np.array([1.0, -0.5]), horizon=0.5, steps=5)
    report = solve_marching_prox(prob)
    assert report.converged
    u = prob.v0.copy()
    times = prob.times()
    for k in range(1, prob.steps + 1):
        u = u / (1.0 + prob.h * (1.0 + times[k]))
        assert np.allclose(report.path.nodes[k], u, atol=1e-9)


def test_split_operator_evolution_matches_full_resolvent():
    """Evolution with A = (symmetric part -> energy) + (skew part -> B).

    Marching on the canonical split must reproduce the resolvent recursion
    of the *unsplit* generator Q + A.
    """
    from selfdual.operators import split_symmetric

    rng = np.random.default_rng(31)
    sp = Space.euclidean(3)
    raw = rng.standard_normal((3, 3))
    amat = 0.4 * (raw @ raw.T) / 3 + 0.8 * (raw - raw.T)
    sym, skew = split_symmetric(sp, amat)
    q = np.eye(3)
    prob = PathProblem(space=sp, phi=Quadratic(sp, q + sym),
                       b_map=LinearMap(sp, matrix=skew),
                       lam=ConservativeMap.zero(sp), f=np.zeros(3),
                       v0=rng.standard_normal(3), horizon=0.5, steps=6)
    report = solve_marching_prox(prob)
    assert report.converged
    u = prob.v0.copy()
    resolvent = np.linalg.inv(np.eye(3) + prob.h * (q + amat))
    for k in range(1, prob.steps + 1):
        u = resolvent @ u
        assert np.allclose(report.path.nodes[k], u, atol=1e-8)
    # gap-form nonnegativity holds with the skew operator in place
    assert report.certificate >= -1e-12
    assert np.all(report.gaps >= -1e-12)
