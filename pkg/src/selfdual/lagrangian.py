"""The algebra of anti-selfdual Lagrangians and their Hamiltonians.

A Lagrangian here is a jointly convex function ``L(x, p)`` on a space and its
(coordinate-identified) dual.  Anti-selfduality means ``L*(p, x) = L(-x, -p)``
for the two-variable conjugate; it forces ``L(x, p) + <x, p> >= 0`` and is the
property that turns minimization of ``L`` along conservative graphs into a
solver with a computable zero-gap certificate.

Constructors
------------
* ``Basic(psi)``                   -- ``psi(x) + psi*(-p)``
* ``oplus(L, M)``                  -- ``inf_r L(x, r) + M(x, p - r)``
* ``star(L, M)``                   -- ``inf_z L(z, p) + M(x - z, p)``
* ``shift(L, B)``                  -- ``L(x, Bx + p)`` for antisymmetric ``B``
* ``lambda_regularize(L, a, b)``   -- inf-convolution with a quadratic kernel,
  with proximal accessor ``J``
* ``augment_boundary(L, B, bp, ell)`` -- ``L(x, Bx + p) + ell(b1 x, b2 x)``

Each composite keeps enough structure for closed-form Hamiltonians where they
exist; everything else goes through inner convex solves.  Anti-selfduality of
composites is never asserted symbolically: :func:`asd_defect` measures it by a
brute-force conjugation oracle in low dimension.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.optimize

from .convex import Quadratic, moreau_envelope


class BoxBoundaryWarning(UserWarning):
    """The conjugation oracle attained its supremum on the search-box boundary."""


# ---------------------------------------------------------------------------
# Lagrangians
# ---------------------------------------------------------------------------


class Lagrangian:
    """Base class. Subclasses implement ``value`` and, where known, closed forms."""

    def __init__(self, space):
        self.space = space

    def value(self, x, p):
        raise NotImplementedError

    def hamiltonian(self, x, y):
        """``H_L(x, y) = sup_p <p, y>_G - L(x, p)``; numeric sup by default."""
        return _hamiltonian_numeric(self, x, y)

    # -- quadratic closure -----------------------------------------------------

    _quad_cache = None

    def quadratic_form(self):
        """If ``L`` is globally quadratic, its ``(H, g, c)`` in stacked coordinates.

        Recovered by exact interpolation (second differences of a quadratic
        are constant) and validated at random probes; returns None when the
        validation fails, so composites that are secretly nonquadratic cannot
        sneak through.
        """
        if self._quad_cache is None:
            self._quad_cache = (_quadratic_closure(self),)
        return self._quad_cache[0]


class Basic(Lagrangian):
    """``L(x, p) = psi(x) + psi*(-p)`` for a convex ``psi`` -- always ASD.

    Its Hamiltonian is ``H(x, y) = psi(-y) - psi(x)``, finite and tempered
    whenever ``psi`` is finite everywhere.
    """

    def __init__(self, psi):
        super().__init__(psi.space)
        self.psi = psi

    def value(self, x, p):
        return self.psi.value(x) + self.psi.conj_value(-np.asarray(p, float))

    def hamiltonian(self, x, y):
        y = self.space.check_element(y)
        return self.psi.value(-y) - self.psi.value(x)


class Shift(Lagrangian):
    """``L_B(x, p) = L(x, Bx + p)``; preserves anti-selfduality for skew ``B``."""

    def __init__(self, lagrangian, b_map):
        super().__init__(lagrangian.space)
        self.inner = lagrangian
        self.b_map = b_map

    def value(self, x, p):
        x = self.space.check_element(x)
        return self.inner.value(x, self.b_map(x) + np.asarray(p, float))

    def hamiltonian(self, x, y):
        return self.inner.hamiltonian(x, y) - self.space.inner(self.b_map(x), y)


class Oplus(Lagrangian):
    """``(L (+) M)(x, p) = inf_r L(x, r) + M(x, p - r)``; Hamiltonians add."""

    def __init__(self, left, right):
        if left.space.dim != right.space.dim:
            raise ValueError("operands must live on the same space")
        super().__init__(left.space)
        self.left = left
        self.right = right

    def value(self, x, p):
        x = self.space.check_element(x)
        p = self.space.check_element(p)
        quad = _binary_quadratic_inner(self.left, self.right, mode="oplus")
        if quad is not None:
            return quad(x, p)

        def objective(r):
            return self.left.value(x, r) + self.right.value(x, p - r)

        return _inner_inf(self.space, objective, seeds=[p / 2, p, self.space.zeros()])

    def hamiltonian(self, x, y):
        return self.left.hamiltonian(x, y) + self.right.hamiltonian(x, y)


class Star(Lagrangian):
    """``(L (*) M)(x, p) = inf_z L(z, p) + M(x - z, p)`` (partial inf-convolution)."""

    def __init__(self, left, right):
        if left.space.dim != right.space.dim:
            raise ValueError("operands must live on the same space")
        super().__init__(left.space)
        self.left = left
        self.right = right

    def value(self, x, p):
        x = self.space.check_element(x)
        p = self.space.check_element(p)
        quad = _binary_quadratic_inner(self.left, self.right, mode="star")
        if quad is not None:
            return quad(x, p)

        def objective(z):
            return self.left.value(z, p) + self.right.value(x - z, p)

        return _inner_inf(self.space, objective, seeds=[x / 2, x, self.space.zeros()])


class LambdaRegularized(Lagrangian):
    """Inf-convolution with the kernel ``|x - z|^2 / (2 alpha) + beta |p|^2 / 2``.

    ``L_reg(x, p) = inf_z L(z, p) + |x - z|^2/(2 alpha) + beta |p|^2 / 2``;
    ``J(x, p)`` is the inner minimizer and ``d/dx L_reg = (x - J(x, p)) / alpha``.

    Anti-selfduality is preserved exactly when ``beta == alpha`` (the kernel is
    then of the form ``phi(x) + phi*(-p)``); two textbook normalizations are
    exposed as presets mapping a single parameter to ``(alpha, beta)``:
    ``moreau``      -> ``(lam, lam)``   and ``quadratic_scale`` -> ``(1/lam^2,
    1/lam^2)``.  For a ``Basic`` operand the regularization collapses to the
    Basic Lagrangian of the Moreau envelope, so evaluation costs one prox.
    """

    def __init__(self, lagrangian, alpha, beta=None):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        beta = alpha if beta is None else beta
        if beta <= 0:
            raise ValueError("beta must be positive")
        super().__init__(lagrangian.space)
        self.inner = lagrangian
        self.alpha = float(alpha)
        self.beta = float(beta)

    @classmethod
    def preset(cls, lagrangian, lam, normalization="moreau"):
        if normalization == "moreau":
            return cls(lagrangian, lam, lam)
        if normalization == "quadratic_scale":
            return cls(lagrangian, 1.0 / lam ** 2, 1.0 / lam ** 2)
        raise ValueError(f"unknown normalization {normalization!r}")

    def proximal(self, x, p):
        """The inner minimizer ``J(x, p)``."""
        x = self.space.check_element(x)
        p = self.space.check_element(p)
        if isinstance(self.inner, Basic):
            return self.inner.psi.prox(self.alpha, x)
        quad = self.inner.quadratic_form()
        if quad is not None:
            return _lambda_inner_quadratic(self, quad, x, p)[1]

        def objective(z):
            d = x - z
            return (self.inner.value(z, p)
                    + 0.5 * self.space.inner(d, d) / self.alpha)

        return _inner_inf(self.space, objective, seeds=[x, self.space.zeros()],
                          return_point=True)[1]

    def value(self, x, p):
        x = self.space.check_element(x)
        p = self.space.check_element(p)
        tail = 0.5 * self.beta * self.space.inner(p, p)
        if isinstance(self.inner, Basic):
            env, _ = moreau_envelope(self.inner.psi, self.alpha, x)
            return env + self.inner.psi.conj_value(-p) + tail
        quad = self.inner.quadratic_form()
        if quad is not None:
            return _lambda_inner_quadratic(self, quad, x, p)[0] + tail

        def objective(z):
            d = x - z
            return (self.inner.value(z, p)
                    + 0.5 * self.space.inner(d, d) / self.alpha)

        return _inner_inf(self.space, objective,
                          seeds=[x, self.space.zeros()]) + tail

    def grad_x(self, x, p):
        """Exact partial gradient ``(x - J(x, p)) / alpha``."""
        return (self.space.check_element(x) - self.proximal(x, p)) / self.alpha

    def hamiltonian(self, x, y):
        if isinstance(self.inner, Basic) and self.beta == self.alpha:
            # collapses to Basic(moreau envelope of psi)
            ex, _ = moreau_envelope(self.inner.psi, self.alpha, x)
            ey, _ = moreau_envelope(self.inner.psi, self.alpha,
                                    -self.space.check_element(y))
            return ey - ex
        return _hamiltonian_numeric(self, x, y)


class BoundaryAugmented(Lagrangian):
    """``L(x, Bx + p) + ell(b1 x, b2 x)`` for ``B`` skew modulo the traces.

    The constructor measures the boundary identity
    ``<x, Bx> = (|b2 x|^2 - |b1 x|^2)/2`` on seeded samples and refuses when
    the defect exceeds ``tol``.
    """

    def __init__(self, lagrangian, b_map, boundary_pair, boundary_lagrangian,
                 tol=1e-8, check_samples=20, seed=0):
        super().__init__(lagrangian.space)
        from .operators import boundary_skew_defect, sample_vectors

        if tol is not None:
            rng = np.random.default_rng(seed)
            samples = sample_vectors(self.space, rng, check_samples)
            defect = boundary_skew_defect(self.space, b_map, boundary_pair,
                                          samples)
            if defect > tol:
                raise ValueError(
                    f"operator fails the boundary skew identity: defect "
                    f"{defect:.3e} > tol {tol:.1e}")
        self.inner = lagrangian
        self.b_map = b_map
        self.boundary_pair = boundary_pair
        self.ell = boundary_lagrangian

    def value(self, x, p):
        x = self.space.check_element(x)
        core = self.inner.value(x, self.b_map(x) + np.asarray(p, float))
        bp = self.boundary_pair
        return core + self.ell.value(bp.b1(x), bp.b2(x))

    def hamiltonian(self, x, y):
        x = self.space.check_element(x)
        bp = self.boundary_pair
        return (self.inner.hamiltonian(x, y)
                - self.space.inner(self.b_map(x), y)
                - self.ell.value(bp.b1(x), bp.b2(x)))


def oplus(left, right):
    return Oplus(left, right)


def star(left, right):
    return Star(left, right)


def shift(lagrangian, b_map):
    return Shift(lagrangian, b_map)


def lambda_regularize(lagrangian, alpha, beta=None):
    return LambdaRegularized(lagrangian, alpha, beta)


def augment_boundary(lagrangian, b_map, boundary_pair, boundary_lagrangian,
                     tol=1e-8):
    return BoundaryAugmented(lagrangian, b_map, boundary_pair,
                             boundary_lagrangian, tol=tol)


def lagrangian_eval(lagrangian, x, p):
    return lagrangian.value(x, p)


def hamiltonian_eval(lagrangian, x, y):
    return lagrangian.hamiltonian(x, y)


class Hamiltonian:
    """Callable view of a Lagrangian's Hamiltonian ``sup_p <p,y>_G - L(x,p)``.

    Dispatches to the closed forms the source carries (basic, shift, sum,
    boundary-augmented, regularized-basic) and to the concave numeric sup
    otherwise.
    """

    def __init__(self, source):
        self.source = source
        self.space = source.space

    def __call__(self, x, y):
        return self.source.hamiltonian(x, y)

    def diagonal_defect(self, samples, scale_fn=None):
        """``max H(x, -x)`` over samples (must be <= 0 up to rounding)."""
        worst = -np.inf
        for x in samples:
            scale = scale_fn(x) if scale_fn else 1.0 + self.space.inner(x, x)
            worst = max(worst, self(x, -np.asarray(x, float)) / scale)
        return worst


# ---------------------------------------------------------------------------
# Boundary Lagrangians
# ---------------------------------------------------------------------------


class BoundaryLagrangian:
    """A function of a trace pair ``(r, s)`` used to encode boundary data."""

    def value(self, r, s):
        raise NotImplementedError

    def conj_value(self, q1, q2):
        raise NotImplementedError

    def grad(self, r, s):
        raise NotImplementedError


class InitialValue(BoundaryLagrangian):
    """``ell(r, s) = |r|^2/2 - 2<a, r> + |a|^2 + |s|^2/2``.

    Self-dual in the required sense ``ell*(-r, s) = ell(r, s)``, and
    ``ell(r, s) - (|s|^2 - |r|^2)/2 = |r - a|^2``, which is why minimizing it
    pins the first trace to ``a``.
    """

    def __init__(self, space1, a, space2=None):
        self.space1 = space1
        self.space2 = space2 if space2 is not None else space1
        self.a = space1.check_element(a)

    def value(self, r, s):
        r = self.space1.check_element(r)
        s = self.space2.check_element(s)
        return (0.5 * self.space1.inner(r, r)
                - 2.0 * self.space1.inner(self.a, r)
                + self.space1.inner(self.a, self.a)
                + 0.5 * self.space2.inner(s, s))

    def conj_value(self, q1, q2):
        q1 = self.space1.check_element(q1)
        q2 = self.space2.check_element(q2)
        w = q1 + 2.0 * self.a
        return (0.5 * self.space1.inner(w, w) - self.space1.inner(self.a, self.a)
                + 0.5 * self.space2.inner(q2, q2))

    def grad(self, r, s):
        r = self.space1.check_element(r)
        s = self.space2.check_element(s)
        return r - 2.0 * self.a, s


class CustomBoundary(BoundaryLagrangian):
    """``ell(r, s) = psi1(r) + psi2(s)`` for two convex functions."""

    def __init__(self, psi1, psi2):
        self.psi1 = psi1
        self.psi2 = psi2
        self.space1 = psi1.space
        self.space2 = psi2.space

    def value(self, r, s):
        return self.psi1.value(r) + self.psi2.value(s)

    def conj_value(self, q1, q2):
        return self.psi1.conj_value(q1) + self.psi2.conj_value(q2)

    def grad(self, r, s):
        return self.psi1.grad(r), self.psi2.grad(s)


class ZeroBoundary(BoundaryLagrangian):
    """The zero function; usable only with zero traces (it is not self-dual)."""

    def value(self, r, s):
        return 0.0

    def conj_value(self, q1, q2):
        return 0.0 if (np.all(np.asarray(q1) == 0)
                       and np.all(np.asarray(q2) == 0)) else np.inf

    def grad(self, r, s):
        return np.zeros_like(np.asarray(r, float)), np.zeros_like(
            np.asarray(s, float))


def selfdual_boundary_defect(ell, samples):
    """``max |ell*(-h1, h2) - ell(h1, h2)|`` over sampled trace pairs."""
    worst = 0.0
    for h1, h2 in samples:
        lhs = ell.conj_value(-np.asarray(h1, float), np.asarray(h2, float))
        rhs = ell.value(h1, h2)
        worst = max(worst, abs(lhs - rhs))
    return worst


def boundary_inequality_defect(ell, samples):
    """Violation of ``ell(r, s) >= (|s|^2 - |r|^2)/2`` (positive = violated)."""
    worst = 0.0
    for r, s in samples:
        bound = 0.5 * (ell.space2.norm(s) ** 2 - ell.space1.norm(r) ** 2)
        worst = max(worst, bound - ell.value(r, s))
    return worst


# ---------------------------------------------------------------------------
# Conjugation oracle and the anti-selfduality defect
# ---------------------------------------------------------------------------


def _quadratic_closure(lagrangian, probes=5, tol=1e-8, seed=3):
    """Try to identify ``L`` with a quadratic ``z -> z^T H z / 2 + g^T z + c``.

    Uses exact second-difference interpolation on the stacked variable
    ``z = [x; p]``, then validates at random probes.  Any +inf value or probe
    mismatch returns None.
    """
    d = lagrangian.space.dim
    n = 2 * d

    def ev(z):
        return lagrangian.value(z[:d], z[d:])

    try:
        c = ev(np.zeros(n))
        if not np.isfinite(c):
            return None
        eye = np.eye(n)
        plus = np.array([ev(eye[i]) for i in range(n)])
        minus = np.array([ev(-eye[i]) for i in range(n)])
        if not (np.all(np.isfinite(plus)) and np.all(np.isfinite(minus))):
            return None
        g = 0.5 * (plus - minus)
        hdiag = plus + minus - 2 * c
        hmat = np.diag(hdiag)
        for i in range(n):
            for j in range(i + 1, n):
                vij = ev(eye[i] + eye[j])
                hmat[i, j] = hmat[j, i] = (
                    vij - c - g[i] - g[j] - 0.5 * hdiag[i] - 0.5 * hdiag[j])
        rng = np.random.default_rng(seed)
        for _ in range(probes):
            z = rng.standard_normal(n)
            predicted = 0.5 * z @ hmat @ z + g @ z + c
            actual = ev(z)
            if not np.isfinite(actual):
                return None
            if abs(predicted - actual) > tol * (1.0 + abs(actual)):
                return None
    except Exception:
        return None
    return hmat, g, c


def _conjugate_from_closure(space, closure, q, y):
    """Closed-form two-variable conjugate of a validated quadratic Lagrangian."""
    hmat, g, c = closure
    w = np.concatenate([space.apply_gram(q), space.apply_gram(y)])
    rhs = w - g
    sol, residual, *_ = np.linalg.lstsq(hmat, rhs, rcond=None)
    if np.linalg.norm(hmat @ sol - rhs) > 1e-8 * (1.0 + np.linalg.norm(rhs)):
        return np.inf
    return float(0.5 * rhs @ sol - c)


def lagrangian_conjugate(lagrangian, q, y, box=4.0, grid_n=None,
                         refine=True, force_grid=False):
    """Brute-force ``L*(q, y) = sup_{x,p} <q,x>_G + <y,p>_G - L(x,p)``.

    Quadratic Lagrangians normally take the exact linear-algebra route;
    ``force_grid=True`` insists on the grid-plus-refinement oracle (the
    validated quadratic closure is still used to *evaluate* the Lagrangian in
    batch, which changes nothing about where the supremum is looked for).
    The grid covers ``[-box, box]^{2 dim}`` and seeds a local ascent; the
    objective is concave, so the refinement is globally valid.  A supremum
    attained on the box boundary triggers :class:`BoxBoundaryWarning`.
    """
    space = lagrangian.space
    closure = lagrangian.quadratic_form()
    if closure is not None and not force_grid:
        return _conjugate_from_closure(space, closure, q, y)
    d = space.dim
    if d > 3:
        raise ValueError("brute-force conjugation supports space.dim <= 3")
    if grid_n is None:
        grid_n = {1: 81, 2: 15, 3: 7}[d]
    gq = space.apply_gram(space.check_element(q))
    gy = space.apply_gram(space.check_element(y))

    axes = [np.linspace(-box, box, grid_n)] * (2 * d)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    lin = pts[:, :d] @ gq + pts[:, d:] @ gy
    if closure is not None:
        hmat, g, c = closure
        lvals = 0.5 * np.einsum("ij,jk,ik->i", pts, hmat, pts) + pts @ g + c
        vals = lin - lvals
    else:
        vals = np.empty(pts.shape[0])
        for i, z in enumerate(pts):
            lv = lagrangian.value(z[:d], z[d:])
            vals[i] = (lin[i] - lv) if np.isfinite(lv) else -np.inf
    best = int(np.argmax(vals))
    zbest, vbest = pts[best], vals[best]
    if np.max(np.abs(zbest)) >= box - 1e-9:
        warnings.warn("conjugation supremum attained on the search box "
                      "boundary; enlarge the box", BoxBoundaryWarning)
    if refine:
        if closure is not None:
            hmat, g, c = closure
            w = np.concatenate([gq, gy])

            def neg(z):
                return -(w @ z - (0.5 * z @ hmat @ z + g @ z + c))

            res = scipy.optimize.minimize(neg, zbest, method="BFGS",
                                          options={"gtol": 1e-13})
            vbest = max(vbest, -res.fun)
        else:
            def neg(z):
                lv = lagrangian.value(z[:d], z[d:])
                if not np.isfinite(lv):
                    return 1e50
                return -(gq @ z[:d] + gy @ z[d:] - lv)

            res = scipy.optimize.minimize(
                neg, zbest, method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
            res2 = scipy.optimize.minimize(
                neg, res.x, method="Powell",
                options={"xtol": 1e-12, "ftol": 1e-14})
            vbest = max(vbest, -res.fun, -res2.fun)
    return float(vbest)


def asd_defect(lagrangian, samples, box=4.0, grid_n=None, force_grid=False):
    """``max |L*(p, x) - L(-x, -p)|`` over sampled ``(x, p)`` pairs.

    Zero (up to oracle accuracy) certifies anti-selfduality on the samples;
    a deliberately broken Lagrangian makes the detector fire.
    """
    worst = 0.0
    for x, p in samples:
        lhs = lagrangian_conjugate(lagrangian, p, x, box=box, grid_n=grid_n,
                                   force_grid=force_grid)
        rhs = lagrangian.value(-np.asarray(x, float), -np.asarray(p, float))
        if np.isinf(lhs) and np.isinf(rhs):
            continue
        worst = max(worst, abs(lhs - rhs))
    return worst


def asd_inequality_defect(lagrangian, samples):
    """Violation of ``L(x, p) + <x, p>_G >= 0`` (positive = violated)."""
    space = lagrangian.space
    worst = 0.0
    for x, p in samples:
        val = lagrangian.value(x, p)
        if not np.isfinite(val):
            continue
        worst = max(worst, -(val + space.inner(x, p)))
    return worst


# ---------------------------------------------------------------------------
# inner solves
# ---------------------------------------------------------------------------


def _inner_inf(space, objective, seeds, return_point=False, tol=1e-12):
    """Minimize a convex objective over the space from several seeds."""
    best_val, best_pt = np.inf, None
    for z0 in seeds:
        res = scipy.optimize.minimize(
            objective, np.asarray(z0, float), method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": tol, "maxiter": 4000})
        res2 = scipy.optimize.minimize(
            objective, res.x, method="Powell",
            options={"xtol": 1e-12, "ftol": 1e-14})
        val, pt = (res2.fun, res2.x) if res2.fun < res.fun else (res.fun, res.x)
        if val < best_val:
            best_val, best_pt = float(val), np.asarray(pt, float)
    if return_point:
        return best_val, best_pt
    return best_val


def _binary_quadratic_inner(left, right, mode):
    """Closed-form inner inf for oplus/star when both operands are quadratic."""
    ql = left.quadratic_form()
    qr = right.quadratic_form()
    if ql is None or qr is None:
        return None
    hl, gl, cl = ql
    hr, gr, cr = qr
    d = left.space.dim

    def evaluate(x, p):
        # minimize over the inner variable t:
        #   oplus: F(t) = L(x, t) + M(x, p - t)
        #   star : F(t) = L(t, p) + M(x - t, p)
        if mode == "oplus":
            def assemble(t):
                return np.concatenate([x, t]), np.concatenate([x, p - t])
        else:
            def assemble(t):
                return np.concatenate([t, p]), np.concatenate([x - t, p])

        def fval(t):
            zl, zr = assemble(t)
            return (0.5 * zl @ hl @ zl + gl @ zl + cl
                    + 0.5 * zr @ hr @ zr + gr @ zr + cr)

        def fgrad(t):
            zl, zr = assemble(t)
            gl_full = hl @ zl + gl
            gr_full = hr @ zr + gr
            if mode == "oplus":
                return gl_full[d:] - gr_full[d:]
            return gl_full[:d] - gr_full[:d]

        def fhess():
            if mode == "oplus":
                return hl[d:, d:] + hr[d:, d:]
            return hl[:d, :d] + hr[:d, :d]

        hess = fhess()
        t = np.zeros(d)
        g = fgrad(t)
        sol, *_ = np.linalg.lstsq(hess, -g, rcond=None)
        if np.linalg.norm(hess @ sol + g) > 1e-9 * (1.0 + np.linalg.norm(g)):
            # anti-selfdual operands keep the inner problem bounded below
            # (by -<x, p>), so an inconsistent stationarity system can only
            # mean severe ill-conditioning; poison the value conservatively
            return np.inf
        return float(fval(sol))

    return evaluate


def _lambda_inner_quadratic(reg, closure, x, p):
    """Inner prox for a quadratic operand of the lambda regularization."""
    hmat, g, c = closure
    d = reg.space.dim
    gram = reg.space.gram
    # minimize over z: L(z, p) + |x - z|^2_G / (2 alpha)
    hzz = hmat[:d, :d] + gram / reg.alpha
    rhs = -(hmat[:d, d:] @ p + g[:d] - gram @ x / reg.alpha)
    z = np.linalg.solve(hzz, rhs)
    zfull = np.concatenate([z, p])
    val = (0.5 * zfull @ hmat @ zfull + g @ zfull + c
           + 0.5 * (x - z) @ gram @ (x - z) / reg.alpha)
    return float(val), z


def _hamiltonian_numeric(lagrangian, x, y, starts=6, seed=11):
    """Multi-start ascent for ``sup_p <p, y>_G - L(x, p)`` (concave in ``p``)."""
    space = lagrangian.space
    x = space.check_element(x)
    gy = space.apply_gram(space.check_element(y))

    def neg(p):
        lv = lagrangian.value(x, p)
        if not np.isfinite(lv):
            return 1e50
        return -(gy @ p - lv)

    rng = np.random.default_rng(seed)
    seeds = [space.zeros(), np.asarray(y, float), -np.asarray(y, float)]
    seeds += [space.random(rng, 2.0) for _ in range(starts - len(seeds))]
    best = np.inf
    for p0 in seeds:
        res = scipy.optimize.minimize(neg, p0, method="Nelder-Mead",
                                      options={"xatol": 1e-10, "fatol": 1e-13,
                                               "maxiter": 4000})
        res2 = scipy.optimize.minimize(neg, res.x, method="Powell",
                                       options={"xtol": 1e-12, "ftol": 1e-14})
        best = min(best, res.fun, res2.fun)
    return -float(best)
