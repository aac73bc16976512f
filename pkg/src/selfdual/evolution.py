"""Evolution solver: ``du/dt + B u + Lambda u + grad phi(u) + f = 0, u(0) = v0``.

The continuous principle minimizes

    int_0^T [ L(t, u, Lambda u + B u + du/dt) + <u, du/dt> ] dt + |u(0) - v0|^2

over paths, where ``L(t, x, p) = psi(t, x) + psi*(t, -p)`` with
``psi = phi + <f, .>``; the added pairing term telescopes in time, so this is
the classical path functional in disguise, and its infimum is zero.

Discretely we keep the *gap form*: with backward differences
``du_k = (u_k - u_{k-1}) / h`` and everything evaluated at the right node,

    certificate(path) = sum_k h [ L(t_k, u_k, p_k) + <u_k, du_k> ]
                        + |u_0 - v0|^2,      p_k = Lambda u_k + B u_k + du_k.

Every bracket is nonnegative by Fenchel-Young (conservativity and skewness
remove the operator terms from the pairing), so the certificate is exactly
nonnegative for every path and vanishes precisely on the implicit-Euler orbit
started at ``v0``: the zero-infimum principle survives discretization without
an O(h) slack.  The plain quadrature of the path integrand differs from the
certificate by the backward-difference dissipation ``sum_k |u_k - u_{k-1}|^2/2``
and is exposed separately as :func:`path_quadrature`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .stationary import StationaryProblem, solve_minimize


@dataclass
class PathProblem:
    """Initial-value evolution data; ``phi`` may be time dependent.

    ``phi`` is either one convex function or a callable ``t -> ConvexFunction``
    (a time-indexed family).  ``steps`` is the number of implicit steps N, so
    paths have N + 1 nodes and ``h = horizon / steps``.
    """

    space: object
    phi: object
    b_map: object
    lam: object
    f: np.ndarray
    v0: np.ndarray
    horizon: float
    steps: int
    check_tol: float = 1e-8

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        self.f = self.space.check_element(self.f)
        self.v0 = self.space.check_element(self.v0)
        # structural gate: reuse the stationary checks once, at t = 0
        gate = StationaryProblem(space=self.space, phi=self.phi_at(0.0),
                                 b_map=self.b_map, lam=self.lam, f=self.f,
                                 check_tol=self.check_tol)
        self.defects = gate.defects

    @property
    def h(self):
        return self.horizon / self.steps

    def phi_at(self, t):
        return self.phi(t) if callable(self.phi) else self.phi

    def times(self):
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def step_lagrangians(self):
        return [_PlainStep(self.phi_at(t), self.f, self.space)
                for t in self.times()[1:]]


@dataclass
class DiscretePath:
    """Nodes ``u_0 ... u_N`` of a discrete path with uniform step ``h``."""

    nodes: np.ndarray
    h: float

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 2:
            raise ValueError("nodes must be a 2-D array (N+1, dim)")

    @classmethod
    def constant(cls, problem, value=None):
        value = problem.v0 if value is None else value
        nodes = np.tile(np.asarray(value, float), (problem.steps + 1, 1))
        return cls(nodes, problem.h)

    @property
    def n_steps(self):
        return self.nodes.shape[0] - 1

    def velocity(self, k):
        return (self.nodes[k] - self.nodes[k - 1]) / self.h

    def velocities(self):
        return np.diff(self.nodes, axis=0) / self.h


@dataclass
class PathReport:
    """Outcome of an evolution solve."""

    path: DiscretePath
    certificate: float
    gaps: np.ndarray
    energy_defect: float
    status: str
    per_step_residuals: np.ndarray = None
    scale: float = 1.0
    method: str = ""
    iterations: int = 0
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == "converged"

    @property
    def x_final(self):
        return self.path.nodes[-1]


# ---------------------------------------------------------------------------
# step Lagrangians
# ---------------------------------------------------------------------------


class _PlainStep:
    """``L(x, p) = psi(x) + psi*(-p)`` with ``psi = phi + <f, .>``."""

    def __init__(self, phi, f, space):
        self.phi = phi
        self.f = f
        self.space = space

    def value(self, x, p):
        return (self.phi.value(x) + self.space.inner(self.f, x)
                + self.phi.conj_value(-p - self.f))

    def d1(self, x, p):
        return self.phi.grad(x) + self.f

    def d2(self, x, p):
        return -self.phi.conj_grad(-p - self.f)


class _MoreauStep:
    """The lambda-regularized step Lagrangian (both kernel weights = lam).

    ``L_reg(x, p) = env_lam psi(x) + psi*(-p) + lam |p|^2 / 2`` where
    ``env_lam psi`` is the Moreau envelope; the first partial derivative is
    the exact prox formula ``(x - J(x)) / lam``.
    """

    def __init__(self, phi, f, space, lam):
        self.phi = phi
        self.f = f
        self.space = space
        self.lam = float(lam)

    def _psi_prox(self, x):
        # prox of psi = phi + <f, .> reduces to a shifted prox of phi
        return self.phi.prox(self.lam, x - self.lam * self.f)

    def value(self, x, p):
        j = self._psi_prox(x)
        d = x - j
        env = (self.phi.value(j) + self.space.inner(self.f, j)
               + 0.5 * self.space.inner(d, d) / self.lam)
        return (env + self.phi.conj_value(-p - self.f)
                + 0.5 * self.lam * self.space.inner(p, p))

    def d1(self, x, p):
        return (x - self._psi_prox(x)) / self.lam

    def d2(self, x, p):
        return -self.phi.conj_grad(-p - self.f) + self.lam * p


# ---------------------------------------------------------------------------
# path functionals
# ---------------------------------------------------------------------------


def _certificate_and_gaps(problem, path, steps=None):
    space = problem.space
    steps = problem.step_lagrangians() if steps is None else steps
    h = path.h
    nodes = path.nodes
    gaps = np.zeros(path.n_steps)
    for k in range(1, path.n_steps + 1):
        u = nodes[k]
        du = (nodes[k] - nodes[k - 1]) / h
        p = problem.lam(u) + problem.b_map(u) + du
        gaps[k - 1] = h * (steps[k - 1].value(u, p) + space.inner(u, du))
    d0 = nodes[0] - problem.v0
    boundary = space.inner(d0, d0)
    return float(np.sum(gaps) + boundary), gaps, boundary


def path_functional(problem, path):
    """The discrete certificate (gap form); exactly nonnegative for any path."""
    return _certificate_and_gaps(problem, path)[0]


def path_quadrature(problem, path):
    """Plain quadrature ``sum_k h L_k + ell(u_0, u_N)`` of the path integrand.

    Equals the certificate minus the backward-difference dissipation
    ``sum |u_k - u_{k-1}|^2 / 2``; can dip O(h) below zero on minimizing
    paths, which is why solvers work with :func:`path_functional` instead.
    """
    space = problem.space
    steps = problem.step_lagrangians()
    h = path.h
    nodes = path.nodes
    total = 0.0
    for k in range(1, path.n_steps + 1):
        u = nodes[k]
        du = (nodes[k] - nodes[k - 1]) / h
        p = problem.lam(u) + problem.b_map(u) + du
        total += h * steps[k - 1].value(u, p)
    u0, uT = nodes[0], nodes[-1]
    total += (0.5 * space.inner(u0, u0) - 2.0 * space.inner(problem.v0, u0)
              + space.inner(problem.v0, problem.v0)
              + 0.5 * space.inner(uT, uT))
    return float(total)


def _certificate_gradient(problem, path, steps):
    """Gradient of the gap-form certificate w.r.t. all nodes (Gram rep)."""
    space = problem.space
    h = path.h
    nodes = path.nodes
    n = path.n_steps
    grad = np.zeros_like(nodes)
    d2 = [None] * (n + 1)
    for k in range(1, n + 1):
        u = nodes[k]
        du = (nodes[k] - nodes[k - 1]) / h
        p = problem.lam(u) + problem.b_map(u) + du
        step = steps[k - 1]
        g2 = step.d2(u, p)
        d2[k] = g2
        grad[k] += h * (step.d1(u, p)
                        + problem.lam.vjp(u, g2)
                        + problem.b_map.adjoint(g2)
                        + g2 / h)
        grad[k] += 2.0 * nodes[k] - nodes[k - 1]
    for k in range(0, n):
        grad[k] += -d2[k + 1] - nodes[k + 1]
    grad[0] += 2.0 * (nodes[0] - problem.v0)
    return grad


def energy_identity_defect(problem, path):
    """Discrete defect of ``|u(t)|^2 = |v0|^2 - 2 int_0^t L``; O(h) when converged."""
    space = problem.space
    steps = problem.step_lagrangians()
    h = path.h
    nodes = path.nodes
    running = 0.0
    worst = 0.0
    norm0 = space.inner(problem.v0, problem.v0)
    for k in range(1, path.n_steps + 1):
        u = nodes[k]
        du = (nodes[k] - nodes[k - 1]) / h
        p = problem.lam(u) + problem.b_map(u) + du
        running += h * steps[k - 1].value(u, p)
        defect = abs(space.inner(u, u) - norm0 + 2.0 * running)
        worst = max(worst, defect)
    return worst / (1.0 + norm0)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def solve_path_minimize(problem, max_iter=2000, cert_tol=1e-8, initial=None,
                        steps=None, record_extra=None):
    """Joint quasi-Newton minimization of the certificate over all nodes."""
    t0 = time.perf_counter()
    space = problem.space
    steps = problem.step_lagrangians() if steps is None else steps
    if initial is None:
        path0 = DiscretePath.constant(problem)
    else:
        path0 = initial
    shape = path0.nodes.shape
    gram = space.gram

    def fun(z):
        path = DiscretePath(z.reshape(shape), problem.h)
        return _certificate_and_gaps(problem, path, steps)[0]

    def jac(z):
        path = DiscretePath(z.reshape(shape), problem.h)
        g = _certificate_gradient(problem, path, steps)
        return (g @ gram.T).ravel()

    res = scipy.optimize.minimize(
        fun, path0.nodes.ravel(), jac=jac, method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": 1e-17, "gtol": 1e-12,
                 "maxcor": 30, "maxls": 60})
    path = DiscretePath(res.x.reshape(shape), problem.h)
    cert, gaps, _ = _certificate_and_gaps(problem, path, steps)
    scale = 1.0 + abs(float(np.sum(np.abs(gaps))))
    status = "converged" if cert <= cert_tol * scale else (
        "max_iter" if res.nit >= max_iter else "failed")
    report = PathReport(path=path, certificate=cert, gaps=gaps,
                        energy_defect=energy_identity_defect(problem, path),
                        status=status, scale=scale, method="path_minimize",
                        iterations=int(res.nit),
                        wall_time_s=time.perf_counter() - t0)
    if record_extra:
        report.extra.update(record_extra)
    return report


def solve_marching_prox(problem, step_cert_tol=1e-10, step_max_iter=500):
    """Implicit-Euler proximal marching; the independent oracle for the path solver.

    Each step solves the resolvent inclusion
    ``(u_k - u_{k-1})/h + B u_k + Lambda u_k + grad phi(u_k) + f = 0``
    through the stationary solver applied to ``phi + |.|^2/(2h)`` with forcing
    ``f - u_{k-1}/h``.  Per-step inclusion residuals are recorded; a failing
    step aborts with its index.
    """
    t0 = time.perf_counter()
    space = problem.space
    h = problem.h
    nodes = np.zeros((problem.steps + 1, space.dim))
    nodes[0] = problem.v0
    residuals = np.zeros(problem.steps)
    times = problem.times()
    for k in range(1, problem.steps + 1):
        phi_k = problem.phi_at(times[k])
        step_problem = StationaryProblem(
            space=space, phi=phi_k.shift_quadratic(1.0 / h),
            b_map=problem.b_map, lam=problem.lam,
            f=problem.f - nodes[k - 1] / h,
            check_tol=None)  # structure already gated by the parent problem
        rep = solve_minimize(step_problem, max_iter=step_max_iter,
                             cert_tol=step_cert_tol,
                             initial=nodes[k - 1], record_history=False)
        if not rep.converged:
            path = DiscretePath(nodes[: k + 1], h)
            return PathReport(
                path=path, certificate=np.inf, gaps=np.zeros(k),
                energy_defect=np.inf, status="failed",
                per_step_residuals=residuals[:k], method="marching",
                iterations=k,
                wall_time_s=time.perf_counter() - t0,
                extra={"failed_step": k, "step_status": rep.status})
        nodes[k] = rep.x
        residuals[k - 1] = rep.inclusion_residual
    path = DiscretePath(nodes, h)
    cert, gaps, _ = _certificate_and_gaps(problem, path)
    scale = 1.0 + abs(float(np.sum(np.abs(gaps))))
    report = PathReport(path=path, certificate=cert, gaps=gaps,
                        energy_defect=energy_identity_defect(problem, path),
                        status="converged", per_step_residuals=residuals,
                        scale=scale, method="marching",
                        iterations=problem.steps,
                        wall_time_s=time.perf_counter() - t0)
    return report


def lambda_flow(problem, schedule, max_iter=2000, cert_tol=1e-8):
    """Solve the path problem through a decreasing sequence of regularizations.

    For each ``lam`` the step Lagrangian is replaced by its inf-convolution
    regularization (Moreau normalization); the previous solution warm-starts
    the next solve.  Returns the final path report; ``extra`` carries the
    certificate and the discrete velocity sup-norm per ``lam`` (the latter
    exhibits the uniform velocity bound of the regularized flows).
    """
    schedule = list(schedule)
    if not schedule or any(l <= 0 for l in schedule):
        raise ValueError("schedule must be a nonempty list of positive values")
    if any(b > a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must decrease")
    _flow_feasibility(problem)
    times = problem.times()
    certificates = []
    velocity_sups = []
    report = None
    warm = None
    for lam in schedule:
        steps = [_MoreauStep(problem.phi_at(t), problem.f, problem.space, lam)
                 for t in times[1:]]
        report = solve_path_minimize(problem, max_iter=max_iter,
                                     cert_tol=cert_tol, initial=warm,
                                     steps=steps)
        warm = report.path
        certificates.append(report.certificate)
        vels = report.path.velocities()
        vnorms = [problem.space.norm(v) for v in vels]
        velocity_sups.append(max(vnorms))
        if len(certificates) > 1 and certificates[-1] > certificates[-2] \
                and certificates[-1] > cert_tol:
            import warnings

            warnings.warn("lambda-flow certificates are not decreasing "
                          "along the schedule", UserWarning)
    report.extra["schedule"] = schedule
    report.extra["certificates"] = certificates
    report.extra["velocity_sup_norms"] = velocity_sups
    report.extra["final_lambda"] = schedule[-1]
    # the configured (unregularized) problem's certificate at the final path:
    # O(lambda) by the vanishing-regularization theory, and the quantity a
    # lambda sweep watches decrease
    report.extra["certificate_unregularized"] = path_functional(problem,
                                                                report.path)
    return report


def report_step_lagrangians(problem, report):
    """The step Lagrangians a report's certificate was measured with."""
    lam = report.extra.get("final_lambda")
    if lam is None:
        return problem.step_lagrangians()
    return [_MoreauStep(problem.phi_at(t), problem.f, problem.space, lam)
            for t in problem.times()[1:]]


def _flow_feasibility(problem):
    """Initial data must admit a subgradient pair ``(p, 0)`` at ``v0``."""
    phi0 = problem.phi_at(0.0)
    p = phi0.grad(problem.v0) + problem.f
    q = -(phi0.grad(problem.space.zeros()) + problem.f)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValueError("initial value lies outside the flow's domain")
    return p, q
