"""Ready-made model problems in canonical form, each with a classical oracle.

Every builder returns a :class:`BuiltProblem` whose ``problem`` field is a
:class:`~selfdual.stationary.StationaryProblem` or
:class:`~selfdual.evolution.PathProblem` that has passed the structural
defect gates, plus an ``oracle`` that solves the same discrete equations by
an independent classical route (Newton on the raw residual, pseudo-spectral
Picard, a closed-form resolvent recursion, or an exact solution formula).
The oracles never touch the self-dual functional, so agreement between the
two routes is a genuine cross-check rather than a tautology.

Problems
--------
* heat flow in 1-D (Dirichlet grid or periodic spectral coordinates);
* a 1-D viscous transport equation with skew advection, a power reaction
  term, and an optional energy-conserving quadratic convection;
* stationary and evolving incompressible flow on the 2-D torus in
  divergence-free Fourier coordinates with exact dealiasing;
* a coupled pair of reaction-diffusion-transport equations on a product
  space whose Gram matrix absorbs the coupling strength ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .convex import Quadratic, SeparablePower, Sum
from .evolution import PathProblem
from .operators import ConservativeMap, LinearMap
from .space import Space
from .stationary import StationaryProblem


@dataclass
class BuiltProblem:
    """A canonical problem plus its independent oracle and metadata."""

    name: str
    problem: object
    oracle: object
    params: dict = field(default_factory=dict)


class BuildError(ValueError):
    """A builder refused its inputs (sign condition, bad name, ...)."""


# ---------------------------------------------------------------------------
# small shared pieces
# ---------------------------------------------------------------------------


def _dirichlet_laplacian(n, h):
    """G-representation of ``-d^2/dx^2`` on interior nodes (3-point stencil)."""
    lap = np.zeros((n, n))
    for i in range(n):
        lap[i, i] = 2.0
        if i > 0:
            lap[i, i - 1] = -1.0
        if i < n - 1:
            lap[i, i + 1] = -1.0
    return lap / h ** 2


def _central_difference(n, h):
    """Antisymmetric interior central-difference matrix (Dirichlet closure)."""
    d = np.zeros((n, n))
    for i in range(n):
        if i > 0:
            d[i, i - 1] = -1.0 / (2 * h)
        if i < n - 1:
            d[i, i + 1] = 1.0 / (2 * h)
    return d


def _skew_transport(d_matrix, a_values):
    """Split-form transport ``(diag(a) D + D diag(a)) / 2``: exactly skew."""
    da = np.diag(a_values)
    return 0.5 * (da @ d_matrix + d_matrix @ da)


def _coefficient(profile, x):
    """Coefficient field from a float, callable, or named profile."""
    if callable(profile):
        return np.array([float(profile(xi)) for xi in x])
    if isinstance(profile, str):
        if profile == "constant":
            return np.ones_like(x)
        if profile == "linear":
            return 1.0 + x
        if profile == "zero":
            return np.zeros_like(x)
        raise BuildError(f"unknown coefficient profile {profile!r}")
    return float(profile) * np.ones_like(x)


def _forcing_1d(choice, x, seed=0, amplitude=1.0):
    if isinstance(choice, np.ndarray):
        return choice
    if callable(choice):
        return np.array([float(choice(xi)) for xi in x])
    if choice == "zero":
        return np.zeros_like(x)
    if choice == "sine":
        return amplitude * np.sin(np.pi * x)
    if isinstance(choice, str) and choice.startswith("random_seeded"):
        rng = np.random.default_rng(_parse_seed(choice, seed))
        return amplitude * rng.standard_normal(x.size)
    raise BuildError(f"unknown forcing choice {choice!r}")


def _parse_seed(name, default):
    if "(" in name:
        inside = name[name.index("(") + 1: name.rindex(")")]
        return int(inside)
    return default


# ---------------------------------------------------------------------------
# heat flow in one dimension
# ---------------------------------------------------------------------------


class HeatExactOracle:
    """Exact solutions of the semidiscrete and continuum heat flow."""

    def __init__(self, space, q_op, v0, grid_x=None, nu=1.0):
        self.space = space
        self.v0 = v0
        self.grid_x = grid_x
        self.nu = nu
        # q_op is Euclidean-symmetric here (scalar gram); eigendecompose once
        self._eigvals, self._eigvecs = np.linalg.eigh(q_op)

    def exact_semidiscrete(self, t):
        """``exp(-t A_h) v0`` for the spatially discrete generator."""
        coeff = self._eigvecs.T @ self.v0
        return self._eigvecs @ (np.exp(-t * self._eigvals) * coeff)

    def exact_path(self, times):
        return np.stack([self.exact_semidiscrete(t) for t in times])

    def implicit_euler_path(self, h, steps):
        """The exact resolvent recursion ``u_k = (I + h A_h)^-k v0``."""
        coeff = self._eigvecs.T @ self.v0
        damp = 1.0 / (1.0 + h * self._eigvals)
        return np.stack([self._eigvecs @ (damp ** k * coeff)
                         for k in range(steps + 1)])

    def exact_continuum(self, t):
        """First-mode Fourier decay (valid for the sine initial datum)."""
        if self.grid_x is None:
            raise BuildError("continuum formula only set up on the grid variant")
        return np.exp(-self.nu * np.pi ** 2 * t) * np.sin(np.pi * self.grid_x)


def build_heat_1d(n, nu, bc="dirichlet", v0="sine", horizon=0.1, steps=32):
    """Heat flow ``u_t = nu u_xx`` as a canonical path problem.

    ``bc="dirichlet"`` uses interior grid nodes on (0, 1) with the trapezoid
    mass matrix; ``bc="periodic"`` uses mean-zero sine/cosine coordinates so
    the energy stays coercive without the constant mode.
    """
    if n < 4:
        raise BuildError("need at least 4 nodes")
    if bc == "dirichlet":
        h = 1.0 / (n + 1)
        x = h * np.arange(1, n + 1)
        space = Space(n, h * np.eye(n))
        q_op = nu * _dirichlet_laplacian(n, h)
        if isinstance(v0, str):
            if v0 == "sine":
                v0_vec = np.sin(np.pi * x)
            elif v0 == "zero":
                v0_vec = np.zeros(n)
            elif v0.startswith("random_seeded"):
                rng = np.random.default_rng(_parse_seed(v0, 0))
                v0_vec = rng.standard_normal(n)
            else:
                raise BuildError(f"unknown initial datum {v0!r}")
        else:
            v0_vec = space.check_element(np.asarray(v0, float))
        oracle_grid = x
    elif bc == "periodic":
        kmax = n // 2
        dim = 2 * kmax
        space = Space(dim, 0.5 * np.eye(dim))
        wavenumbers = np.repeat(np.arange(1, kmax + 1), 2)
        q_op = np.diag(nu * (2 * np.pi * wavenumbers) ** 2)
        v0_vec = np.zeros(dim)
        if isinstance(v0, str):
            if v0 == "sine":
                v0_vec[1] = 1.0  # sin(2 pi x)
            elif v0 == "zero":
                pass
            elif v0.startswith("random_seeded"):
                rng = np.random.default_rng(_parse_seed(v0, 0))
                v0_vec = rng.standard_normal(dim) / (1.0 + wavenumbers ** 2)
            else:
                raise BuildError(f"unknown initial datum {v0!r}")
        else:
            v0_vec = space.check_element(np.asarray(v0, float))
        oracle_grid = None
    else:
        raise BuildError(f"unknown boundary condition {bc!r}")

    phi = Quadratic(space, q_op)
    problem = PathProblem(space=space, phi=phi, b_map=LinearMap.zero(space),
                          lam=ConservativeMap.zero(space), f=space.zeros(),
                          v0=v0_vec, horizon=horizon, steps=steps)
    oracle = HeatExactOracle(space, q_op, v0_vec, grid_x=oracle_grid, nu=nu)
    return BuiltProblem(name="heat_1d", problem=problem, oracle=oracle,
                        params={"n": n, "nu": nu, "bc": bc, "v0": str(v0),
                                "horizon": horizon, "steps": steps})


# ---------------------------------------------------------------------------
# transport-driven 1-D fluid analogue
# ---------------------------------------------------------------------------


class NewtonOracle:
    """Damped Newton on the raw residual, assembled from explicit matrices."""

    def __init__(self, residual, jacobian, space):
        self.residual = residual
        self.jacobian = jacobian
        self.space = space

    def solve(self, initial=None, tol=1e-12, max_iter=100):
        x = self.space.zeros() if initial is None else np.array(initial)
        r = self.residual(x)
        rnorm = self.space.norm(r)
        for _ in range(max_iter):
            if rnorm <= tol * (1.0 + self.space.norm(x)):
                return x
            step = -np.linalg.solve(self.jacobian(x), r)
            t = 1.0
            while t > 1e-12:
                xn = x + t * step
                rn = self.residual(xn)
                rn_norm = self.space.norm(rn)
                if rn_norm < rnorm:
                    x, r, rnorm = xn, rn, rn_norm
                    break
                t *= 0.5
            else:
                raise RuntimeError("Newton oracle stalled")
        raise RuntimeError(f"Newton oracle did not converge ({rnorm:.3e})")


def build_transport_1d(n, nu, m, a="constant", a0="zero", f="sine",
                       convection=True, forcing_amplitude=1.0, seed=0):
    """Viscous transport with power reaction on (0, 1), Dirichlet walls.

    Canonical split: the advection ``a du/dx + (da/dx) u / 2`` is the exact
    split-form skew matrix; the leftover zeroth-order piece
    ``(div a / 2 - a0) u`` joins the convex energy, which *requires*
    ``div(a)/2 - a0 >= 0`` pointwise -- checked here, violating node named.
    With ``convection=True`` the energy-conserving quadratic
    ``(u u_x)`` in skew form rides along as the conservative map.
    """
    if n < 4:
        raise BuildError("need at least 4 nodes")
    if m <= 1:
        raise BuildError("reaction exponent must exceed 1")
    h = 1.0 / (n + 1)
    x = h * np.arange(1, n + 1)
    space = Space(n, h * np.eye(n))

    a_vals = _coefficient(a, x)
    a0_vals = _coefficient(a0, x)
    x_ext = np.concatenate([[0.0], x, [1.0]])
    a_ext = _coefficient(a, x_ext)
    div_a = (a_ext[2:] - a_ext[:-2]) / (2 * h)

    weight = 0.5 * div_a - a0_vals
    bad = np.where(weight < -1e-12)[0]
    if bad.size:
        i = int(bad[0])
        raise BuildError(
            f"convexity condition div(a)/2 - a0 >= 0 fails at node {i} "
            f"(x={x[i]:.4f}, value {weight[i]:.3e})")
    weight = np.maximum(weight, 0.0)

    d_mat = _central_difference(n, h)
    transport = _skew_transport(d_mat, a_vals)
    lap = _dirichlet_laplacian(n, h)
    q_op = nu * lap + np.diag(weight)
    phi = Sum(space, [Quadratic(space, q_op),
                      SeparablePower(space, m, weights=h)])
    f_vec = _forcing_1d(f, x, seed=seed, amplitude=forcing_amplitude)
    b_map = LinearMap(space, matrix=transport)

    if convection:
        def lam_apply(u):
            return (u * (d_mat @ u) + d_mat @ (u * u)) / 3.0

        def lam_vjp(u, w):
            du = d_mat @ u
            return (du * w - d_mat @ (u * w) - 2.0 * u * (d_mat @ w)) / 3.0

        lam = ConservativeMap(space, lam_apply, vjp=lam_vjp)
    else:
        lam = ConservativeMap.zero(space)

    problem = StationaryProblem(space=space, phi=phi, b_map=b_map, lam=lam,
                                f=f_vec)

    def residual(u):
        r = q_op @ u + np.abs(u) ** (m - 2) * u + transport @ u + f_vec
        if convection:
            r = r + (u * (d_mat @ u) + d_mat @ (u * u)) / 3.0
        return r

    def jacobian(u):
        jac = q_op + np.diag((m - 1) * np.abs(u) ** (m - 2)) + transport
        if convection:
            jac = jac + (np.diag(d_mat @ u) + np.diag(u) @ d_mat
                         + 2.0 * d_mat @ np.diag(u)) / 3.0
        return jac

    oracle = NewtonOracle(residual, jacobian, space)
    return BuiltProblem(name="transport_1d", problem=problem, oracle=oracle,
                        params={"n": n, "nu": nu, "m": m, "a": str(a),
                                "a0": str(a0), "f": str(f),
                                "convection": convection})


# ---------------------------------------------------------------------------
# incompressible flow on the 2-D torus
# ---------------------------------------------------------------------------


class SpectralGrid:
    """Divergence-free, mean-zero Fourier coordinates on ``[0, 2 pi]^2``.

    Coordinates are (cos, sin) amplitude pairs along the unit vector
    ``(-k2, k1)/|k|`` for every lattice mode in the open half-plane with
    ``max(|k1|, |k2|) <= K``, ``K = (N - 1) // 3``.  Products of two such
    fields are evaluated on the ``N x N`` grid and truncated back to the mode
    set; with ``N > 3K`` the truncated result carries no aliasing error at
    all, so the quadratic convection is conservative to rounding.
    """

    def __init__(self, n_grid):
        if n_grid < 8:
            raise BuildError("need at least an 8x8 grid")
        self.n = int(n_grid)
        # alias-free products need N - 2K > K, i.e. K <= (N - 1) / 3
        self.kmax = (self.n - 1) // 3
        modes = []
        for k2 in range(0, self.kmax + 1):
            for k1 in range(-self.kmax, self.kmax + 1):
                if k2 == 0 and k1 <= 0:
                    continue
                modes.append((k1, k2))
        self.modes = np.array(modes)
        self.dim = 2 * len(self.modes)
        ksq = self.modes[:, 0] ** 2.0 + self.modes[:, 1] ** 2.0
        self.mode_ksq = np.repeat(ksq, 2)
        kx = np.fft.fftfreq(self.n, d=1.0 / self.n)
        self.k1_grid, self.k2_grid = np.meshgrid(kx, kx, indexing="ij")
        self.ksq_grid = self.k1_grid ** 2 + self.k2_grid ** 2
        self._ksq_safe = np.where(self.ksq_grid == 0, 1.0, self.ksq_grid)
        self.space = Space(self.dim, 2.0 * np.pi ** 2 * np.eye(self.dim))

    # -- transforms ------------------------------------------------------------

    def coords_to_spectral(self, coords):
        """Stack of two complex spectral arrays (uhat1, uhat2)."""
        uhat = np.zeros((2, self.n, self.n), dtype=complex)
        amps = coords.reshape(-1, 2)
        for (k1, k2), (a, b) in zip(self.modes, amps):
            norm = np.hypot(k1, k2)
            e1, e2 = -k2 / norm, k1 / norm
            half = 0.5 * (a - 1j * b)
            uhat[0, k1 % self.n, k2 % self.n] += half * e1
            uhat[1, k1 % self.n, k2 % self.n] += half * e2
            uhat[0, (-k1) % self.n, (-k2) % self.n] += np.conj(half) * e1
            uhat[1, (-k1) % self.n, (-k2) % self.n] += np.conj(half) * e2
        return uhat

    def spectral_to_coords(self, uhat):
        """Project onto the divergence-free mode set (adjoint of inclusion)."""
        coords = np.zeros(self.dim)
        for idx, (k1, k2) in enumerate(self.modes):
            norm = np.hypot(k1, k2)
            e1, e2 = -k2 / norm, k1 / norm
            c = (uhat[0, k1 % self.n, k2 % self.n] * e1
                 + uhat[1, k1 % self.n, k2 % self.n] * e2)
            coords[2 * idx] = 2.0 * c.real
            coords[2 * idx + 1] = -2.0 * c.imag
        return coords

    def grids(self, coords):
        uhat = self.coords_to_spectral(coords)
        scale = self.n ** 2
        return (np.fft.ifft2(uhat[0]).real * scale,
                np.fft.ifft2(uhat[1]).real * scale)

    def _spectral_from_grids(self, g1, g2):
        scale = self.n ** 2
        return np.stack([np.fft.fft2(g1) / scale, np.fft.fft2(g2) / scale])

    def _grid_derivatives(self, uhat):
        scale = self.n ** 2
        out = {}
        for j in (0, 1):
            out[(j, 1)] = np.fft.ifft2(1j * self.k1_grid * uhat[j]).real * scale
            out[(j, 2)] = np.fft.ifft2(1j * self.k2_grid * uhat[j]).real * scale
        return out

    def leray(self, what):
        dot = self.k1_grid * what[0] + self.k2_grid * what[1]
        what = what.copy()
        what[0] -= self.k1_grid * dot / self._ksq_safe
        what[1] -= self.k2_grid * dot / self._ksq_safe
        what[:, 0, 0] = 0.0
        return what

    # -- the convection map and its transpose ------------------------------------

    def convection(self, coords):
        """Leray-projected, dealiased ``(u . grad) u`` in coordinates."""
        uhat = self.coords_to_spectral(coords)
        scale = self.n ** 2
        u1 = np.fft.ifft2(uhat[0]).real * scale
        u2 = np.fft.ifft2(uhat[1]).real * scale
        der = self._grid_derivatives(uhat)
        conv1 = u1 * der[(0, 1)] + u2 * der[(0, 2)]
        conv2 = u1 * der[(1, 1)] + u2 * der[(1, 2)]
        what = self.leray(self._spectral_from_grids(conv1, conv2))
        return self.spectral_to_coords(what)

    def convection_vjp(self, coords, w_coords):
        """Gram-adjoint Jacobian action ``P[-(u.grad) w + (grad u)^T w]``."""
        uhat = self.coords_to_spectral(coords)
        what = self.coords_to_spectral(w_coords)
        scale = self.n ** 2
        u1 = np.fft.ifft2(uhat[0]).real * scale
        u2 = np.fft.ifft2(uhat[1]).real * scale
        w1 = np.fft.ifft2(what[0]).real * scale
        w2 = np.fft.ifft2(what[1]).real * scale
        du = self._grid_derivatives(uhat)
        dw = self._grid_derivatives(what)
        out1 = -(u1 * dw[(0, 1)] + u2 * dw[(0, 2)]) \
            + du[(0, 1)] * w1 + du[(1, 1)] * w2
        out2 = -(u1 * dw[(1, 1)] + u2 * dw[(1, 2)]) \
            + du[(0, 2)] * w1 + du[(1, 2)] * w2
        ohat = self.leray(self._spectral_from_grids(out1, out2))
        return self.spectral_to_coords(ohat)

    def divergence_sup(self, coords):
        """Spectral divergence of the represented field (should be ~0)."""
        uhat = self.coords_to_spectral(coords)
        div = 1j * (self.k1_grid * uhat[0] + self.k2_grid * uhat[1])
        return float(np.max(np.abs(div)))

    # -- named fields --------------------------------------------------------------

    def taylor_green(self):
        """Coordinates of ``(sin x cos y, -cos x sin y)``."""
        coords = np.zeros(self.dim)
        # sin x cos y = (sin(x+y) + sin(x-y)) / 2, and the expansion along
        # b_k = sin(k.x) e(k) gives amplitude -sqrt(2)/2 on k=(1,1)
        # (e = (-1,1)/sqrt(2)) and +sqrt(2)/2 on k=(-1,1) (e = (-1,-1)/sqrt(2))
        for idx, (k1, k2) in enumerate(self.modes):
            if (k1, k2) == (1, 1):
                coords[2 * idx + 1] = -np.sqrt(2.0) / 2.0
            if (k1, k2) == (-1, 1):
                coords[2 * idx + 1] = np.sqrt(2.0) / 2.0
        return coords

    def random_field(self, seed, amplitude=0.1, max_mode=3):
        rng = np.random.default_rng(seed)
        coords = np.zeros(self.dim)
        for idx, (k1, k2) in enumerate(self.modes):
            if max(abs(k1), abs(k2)) <= max_mode:
                decay = 1.0 / (k1 ** 2 + k2 ** 2)
                coords[2 * idx] = amplitude * decay * rng.standard_normal()
                coords[2 * idx + 1] = amplitude * decay * rng.standard_normal()
        return coords


class PicardSpectralOracle:
    """Fixed-point iteration ``u <- (nu A)^-1 (-conv(u) - f)`` in coordinates."""

    def __init__(self, grid, nu, f_coords):
        self.grid = grid
        self.nu = nu
        self.f = f_coords

    def solve(self, tol=1e-13, max_iter=500, damping=1.0):
        u = np.zeros(self.grid.dim)
        inv = 1.0 / (self.nu * self.grid.mode_ksq)
        for _ in range(max_iter):
            unew = inv * (-(self.grid.convection(u)) - self.f)
            step = np.linalg.norm(unew - u)
            u = (1.0 - damping) * u + damping * unew
            if not (np.isfinite(step) and np.all(np.isfinite(u))):
                raise RuntimeError("Picard oracle diverged")
            if step <= tol * (1.0 + np.linalg.norm(u)):
                return u
        raise RuntimeError("Picard oracle did not converge")


def _nse_forcing(grid, forcing, nu, seed=0, amplitude=0.1):
    if isinstance(forcing, np.ndarray):
        coords = forcing
    elif forcing == "taylor_green":
        coords = -2.0 * nu * grid.taylor_green()
    elif forcing == "zero":
        coords = np.zeros(grid.dim)
    elif isinstance(forcing, str) and forcing.startswith("random_seeded"):
        coords = grid.random_field(_parse_seed(forcing, seed),
                                   amplitude=amplitude)
    else:
        raise BuildError(f"unknown forcing {forcing!r}")
    if grid.divergence_sup(coords) > 1e-10:
        raise BuildError("forcing must be divergence-free")
    return coords


def _nse_pieces(grid, nu, perturbation=None):
    space = grid.space
    q_op = np.diag(nu * grid.mode_ksq)
    b_matrix = np.zeros((grid.dim, grid.dim))
    if perturbation is not None:
        eps_sym, eps_skew, seed = perturbation
        rng = np.random.default_rng(seed)
        if eps_sym < 0 or eps_sym >= nu:
            raise BuildError("symmetric perturbation must keep nu - eps > 0")
        q_op = q_op + eps_sym * np.eye(grid.dim)
        raw = rng.standard_normal((grid.dim, grid.dim))
        skew = raw - raw.T
        b_matrix = eps_skew * skew / max(np.linalg.norm(skew, 2), 1e-12)
    phi = Quadratic(space, q_op)
    b_map = LinearMap(space, matrix=b_matrix)
    lam = ConservativeMap(space, grid.convection, vjp=grid.convection_vjp)
    return phi, b_map, lam


def build_nse2d_stationary(n_modes, nu, forcing="taylor_green",
                           perturbation=None, seed=0,
                           forcing_amplitude=0.1):
    """Stationary incompressible flow in divergence-free Fourier coordinates.

    The viscous energy is the diagonal quadratic ``nu/2 sum |k|^2 |u_k|^2``
    whose conjugate is the exact inverse-Stokes quadratic
    ``1/(2 nu) sum |v_k|^2 / |k|^2``; the convection is the Leray-projected,
    exactly dealiased quadratic map.  ``perturbation=(eps_sym, eps_skew,
    seed)`` adds a bounded symmetric + skew pair, the synthetic stand-in for
    a boundary-induced linear drift, keeping the coercivity margin positive.
    """
    grid = SpectralGrid(n_modes)
    phi, b_map, lam = _nse_pieces(grid, nu, perturbation)
    f_coords = _nse_forcing(grid, forcing, nu, seed,
                            amplitude=forcing_amplitude)
    problem = StationaryProblem(space=grid.space, phi=phi, b_map=b_map,
                                lam=lam, f=f_coords)
    oracle = PicardSpectralOracle(grid, nu, f_coords)
    built = BuiltProblem(name="nse2d_stationary", problem=problem,
                         oracle=oracle,
                         params={"n_modes": n_modes, "nu": nu,
                                 "forcing": str(forcing)})
    built.grid = grid
    return built


class DecayingVortexOracle:
    """Exact solution ``u(t) = exp(-2 nu t) u_TG`` of the unforced evolution."""

    def __init__(self, grid, nu):
        self.grid = grid
        self.nu = nu

    def exact_path(self, times):
        tg = self.grid.taylor_green()
        return np.stack([np.exp(-2.0 * self.nu * t) * tg for t in times])

    def energy(self, t):
        tg = self.grid.taylor_green()
        e0 = 0.5 * self.grid.space.inner(tg, tg)
        return np.exp(-4.0 * self.nu * t) * e0


def build_nse2d_evolution(n_modes, nu, v0="taylor_green", forcing="zero",
                          horizon=0.2, steps=16, perturbation=None, seed=0,
                          forcing_amplitude=0.1):
    """Evolving incompressible flow; decaying-vortex oracle when unforced."""
    grid = SpectralGrid(n_modes)
    phi, b_map, lam = _nse_pieces(grid, nu, perturbation)
    f_coords = _nse_forcing(grid, forcing, nu, seed,
                            amplitude=forcing_amplitude)
    if isinstance(v0, np.ndarray):
        v0_coords = v0
    elif v0 == "taylor_green":
        v0_coords = grid.taylor_green()
    elif v0 == "zero":
        v0_coords = np.zeros(grid.dim)
    elif isinstance(v0, str) and v0.startswith("random_seeded"):
        v0_coords = grid.random_field(_parse_seed(v0, seed))
    else:
        raise BuildError(f"unknown initial datum {v0!r}")
    problem = PathProblem(space=grid.space, phi=phi, b_map=b_map, lam=lam,
                          f=f_coords, v0=v0_coords, horizon=horizon,
                          steps=steps)
    oracle = DecayingVortexOracle(grid, nu) if str(forcing) == "zero" else None
    built = BuiltProblem(name="nse2d_evolution", problem=problem,
                         oracle=oracle,
                         params={"n_modes": n_modes, "nu": nu, "v0": str(v0),
                                 "forcing": str(forcing), "horizon": horizon,
                                 "steps": steps})
    built.grid = grid
    return built


def convection_refinement_stability(coords_small, n_small, n_big):
    """Compare the convection of a field at two resolutions on shared modes.

    The finitely checkable stand-in for continuity of the nonlinear map:
    refining the grid must not move the resolved part of the output.
    """
    gs = SpectralGrid(n_small)
    gb = SpectralGrid(n_big)
    out_small = gs.convection(coords_small)
    coords_big = np.zeros(gb.dim)
    index_small = {tuple(k): i for i, k in enumerate(gs.modes)}
    for ib, k in enumerate(gb.modes):
        i = index_small.get(tuple(k))
        if i is not None:
            coords_big[2 * ib: 2 * ib + 2] = coords_small[2 * i: 2 * i + 2]
    out_big = gb.convection(coords_big)
    worst = 0.0
    for ib, k in enumerate(gb.modes):
        i = index_small.get(tuple(k))
        if i is not None:
            worst = max(worst, float(np.max(np.abs(
                out_big[2 * ib: 2 * ib + 2] - out_small[2 * i: 2 * i + 2]))))
    return worst


# ---------------------------------------------------------------------------
# coupled reaction-diffusion-transport pair
# ---------------------------------------------------------------------------


def build_coupled_system_1d(n, p=2.0, q=2.0, m=2, c=1.0, b1="zero", b2="zero",
                            f="sine", g="zero", forcing_amplitude=0.1,
                            seed=0):
    """Two fields coupled through second-order and power maps; Dirichlet walls.

    The discrete system (``Lap`` is the positive 3-point operator, primes
    suppressed) is

        Lap (u + v) - b1 du/dx + |u|^{p-2} u + u^{m-1} v^m + f       = 0
        Lap (v - c^2 u) - b2 dv/dx + |v|^{q-2} v - c^2 u^m v^{m-1} + g = 0.

    Weighting the second factor's Gram block by ``1/c^2`` makes the
    ``(+Lap, -c^2 Lap)`` coupling exactly skew, and the same weight is what
    forces the ``c^2`` on the second power term: with the unscaled power map
    the pairing ``<Lambda z, z>`` misses cancelling by ``(1 - 1/c^2)``, so no
    Gram choice carries both structures unless the coupling constant also
    multiplies the power term (at ``c = 1`` this is invisible and the system
    is the classical one).  ``div b1 >= 0`` and ``div b2 >= 0`` are required
    and checked nodewise.
    """
    if n < 4:
        raise BuildError("need at least 4 nodes")
    if p < 2 or q < 2:
        raise BuildError("growth exponents must be >= 2")
    if int(m) != m or m < 1:
        raise BuildError("coupling exponent m must be a positive integer")
    m = int(m)
    c2 = float(c) ** 2
    if c2 <= 0:
        raise BuildError("coupling constant c must be nonzero")

    h = 1.0 / (n + 1)
    x = h * np.arange(1, n + 1)
    dim = 2 * n
    gram = np.concatenate([h * np.ones(n), (h / c2) * np.ones(n)])
    space = Space(dim, np.diag(gram))

    lap = _dirichlet_laplacian(n, h)
    d_mat = _central_difference(n, h)
    x_ext = np.concatenate([[0.0], x, [1.0]])

    transports, weights = [], []
    for prof in (b1, b2):
        vals = _coefficient(prof, x)
        ext = _coefficient(prof, x_ext)
        div = (ext[2:] - ext[:-2]) / (2 * h)
        bad = np.where(div < -1e-12)[0]
        if bad.size:
            raise BuildError(
                f"sign condition div(b) >= 0 fails at node {int(bad[0])}")
        transports.append(_skew_transport(d_mat, vals))
        weights.append(0.5 * np.maximum(div, 0.0))
    t1, t2 = transports
    w1, w2 = weights

    b_matrix = np.zeros((dim, dim))
    b_matrix[:n, :n] = -t1
    b_matrix[:n, n:] = lap
    b_matrix[n:, :n] = -c2 * lap
    b_matrix[n:, n:] = -t2
    b_map = LinearMap(space, matrix=b_matrix)

    q_block = np.zeros((dim, dim))
    q_block[:n, :n] = lap + np.diag(w1)
    q_block[n:, n:] = lap + np.diag(w2)
    quad = Quadratic(space, q_block)
    # power weights matching the Gram diagonal give the unscaled gradients
    parts = [quad]
    if p == q:
        parts.append(SeparablePower(space, p, weights=gram))
    else:
        from .convex import Restriction

        su = Space(n, h * np.eye(n))
        sv = Space(n, (h / c2) * np.eye(n))
        parts.append(Restriction(space, SeparablePower(su, p, weights=h),
                                 np.arange(n)))
        parts.append(Restriction(space, SeparablePower(sv, q,
                                                       weights=h / c2),
                                 np.arange(n, dim)))
    phi = Sum(space, parts)

    f_vec = _forcing_1d(f, x, seed=seed, amplitude=forcing_amplitude)
    g_vec = _forcing_1d(g, x, seed=seed + 1, amplitude=forcing_amplitude)
    forcing = np.concatenate([f_vec, g_vec])

    def lam_apply(z):
        u, v = z[:n], z[n:]
        return np.concatenate([u ** (m - 1) * v ** m,
                               -c2 * u ** m * v ** (m - 1)])

    def lam_vjp(z, w):
        u, v = z[:n], z[n:]
        w1_, w2_ = w[:n], w[n:]
        a11 = (m - 1) * u ** (m - 2) * v ** m if m >= 2 else np.zeros(n)
        a12 = m * u ** (m - 1) * v ** (m - 1)
        a22 = (m - 1) * u ** m * v ** (m - 2) if m >= 2 else np.zeros(n)
        return np.concatenate([a11 * w1_ - a12 * w2_,
                               c2 * a12 * w1_ - c2 * a22 * w2_])

    lam = ConservativeMap(space, lam_apply, vjp=lam_vjp)
    problem = StationaryProblem(space=space, phi=phi, b_map=b_map, lam=lam,
                                f=forcing)

    def residual(z):
        u, v = z[:n], z[n:]
        r1 = (lap @ u + w1 * u + np.abs(u) ** (p - 2) * u
              - t1 @ u + lap @ v + u ** (m - 1) * v ** m + f_vec)
        r2 = (lap @ v + w2 * v + np.abs(v) ** (q - 2) * v
              - t2 @ v - c2 * (lap @ u) - c2 * u ** m * v ** (m - 1) + g_vec)
        return np.concatenate([r1, r2])

    def jacobian(z):
        u, v = z[:n], z[n:]
        jac = np.zeros((dim, dim))
        du_pow = (p - 1) * np.abs(u) ** (p - 2)
        dv_pow = (q - 1) * np.abs(v) ** (q - 2)
        a11 = (m - 1) * u ** (m - 2) * v ** m if m >= 2 else np.zeros(n)
        a12 = m * u ** (m - 1) * v ** (m - 1)
        a22 = (m - 1) * u ** m * v ** (m - 2) if m >= 2 else np.zeros(n)
        jac[:n, :n] = lap + np.diag(w1 + du_pow + a11) - t1
        jac[:n, n:] = lap + np.diag(a12)
        jac[n:, :n] = -c2 * (lap + np.diag(a12))
        jac[n:, n:] = lap + np.diag(w2 + dv_pow) - t2 - c2 * np.diag(a22)
        return jac

    oracle = NewtonOracle(residual, jacobian, space)
    built = BuiltProblem(name="coupled_1d", problem=problem, oracle=oracle,
                         params={"n": n, "p": p, "q": q, "m": m, "c": c,
                                 "b1": str(b1), "b2": str(b2),
                                 "f": str(f), "g": str(g)})
    built.split = lambda z: (z[:n], z[n:])
    return built


# ---------------------------------------------------------------------------
# registry for the command-line runner
# ---------------------------------------------------------------------------


def build_by_name(name, params):
    builders = {
        "heat_1d": build_heat_1d,
        "transport_1d": build_transport_1d,
        "nse2d_stationary": build_nse2d_stationary,
        "nse2d_evolution": build_nse2d_evolution,
        "coupled_1d": build_coupled_system_1d,
    }
    if name not in builders:
        raise BuildError(f"unknown problem {name!r}; "
                         f"choose from {sorted(builders)}")
    return builders[name](**params)


PROBLEM_SCHEMAS = {
    "heat_1d": {"n": int, "nu": float, "bc": str, "v0": str,
                "horizon": float, "steps": int},
    "transport_1d": {"n": int, "nu": float, "m": float, "a": str, "a0": str,
                     "f": str, "convection": bool,
                     "forcing_amplitude": float, "seed": int},
    "nse2d_stationary": {"n_modes": int, "nu": float, "forcing": str,
                         "seed": int, "forcing_amplitude": float},
    "nse2d_evolution": {"n_modes": int, "nu": float, "v0": str,
                        "forcing": str, "horizon": float, "steps": int,
                        "seed": int, "forcing_amplitude": float},
    "coupled_1d": {"n": int, "p": float, "q": float, "m": int, "c": float,
                   "b1": str, "b2": str, "f": str, "g": str,
                   "forcing_amplitude": float, "seed": int},
}
