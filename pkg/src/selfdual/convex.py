"""Closed convex functions with conjugates, subgradients, and proximal maps.

Every function lives on a :class:`~selfdual.space.Space` and all three dual
objects are taken with respect to that space's Gram pairing:

* conjugate      ``phi*(p) = sup_x <p, x>_G - phi(x)``
* subgradient    ``g`` with ``phi(y) >= phi(x) + <g, y - x>_G``
* proximal map   ``prox(lam, x) = argmin_z phi(z) + |x - z|_G^2 / (2 lam)``

Quadratic and power kinds carry exact closed-form duality; sums and
compositions fall back to an inner strongly-convex solve (Newton with an
analytic Hessian when available, multi-start quasi-Newton otherwise) that
reports its optimality residual and refuses to return silently inaccurate
values.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.optimize


class ConjugateError(RuntimeError):
    """Inner maximization for a conjugate value failed to converge.

    Carries ``gap_estimate``, a bound proxy (final gradient norm) for how far
    the returned value may be from the true supremum.
    """

    def __init__(self, message, gap_estimate):
        super().__init__(f"{message} (gap estimate {gap_estimate:.3e})")
        self.gap_estimate = gap_estimate


class ProxError(RuntimeError):
    """Inner minimization for a proximal point failed; carries the residual."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class ConvexFunction:
    """Base class; concrete kinds override the closed forms they possess."""

    def __init__(self, space):
        self.space = space

    # -- primal side ----------------------------------------------------------

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        """A subgradient at ``x`` in Gram representation (the gradient when smooth)."""
        raise NotImplementedError

    def hess_euc(self, x):
        """Euclidean Hessian of ``value`` as a dense matrix, or None."""
        return None

    # -- dual side ------------------------------------------------------------

    def conj_pair(self, p):
        """Return ``(phi*(p), argmax)``; the default runs the inner solve."""
        return _conjugate_by_solve(self, p)

    def conj_value(self, p):
        return self.conj_pair(p)[0]

    def conj_grad(self, p):
        """Gradient of the conjugate = the maximizing point."""
        return self.conj_pair(p)[1]

    def prox(self, lam, x):
        if lam <= 0:
            raise ValueError(f"prox parameter must be positive, got {lam}")
        return _prox_by_solve(self, lam, x)

    # -- structure helpers ----------------------------------------------------

    def shift_quadratic(self, rho):
        """The function ``phi + (rho/2) |.|_G^2`` (used by implicit stepping)."""
        return Sum(self.space, [self, Quadratic.isotropic(self.space, rho)])

    def scale_hint(self, x):
        v = self.value(x)
        return 1.0 + (abs(v) if np.isfinite(v) else 0.0)


class Quadratic(ConvexFunction):
    """``phi(x) = <x, Q x>_G / 2 + <b, x>_G + c`` for a Gram-self-adjoint PSD ``Q``.

    ``Q`` is the coordinate matrix of the operator (so the Euclidean Hessian
    is ``G Q``), ``b`` is an element in Gram representation.  The conjugate is
    again quadratic, ``phi*(p) = <p - b, Q^-1 (p - b)>_G / 2 - c``, computed
    through a cached LU factorization.
    """

    def __init__(self, space, q_op, b=None, c=0.0):
        super().__init__(space)
        q_op = np.asarray(q_op, dtype=float)
        gq = space.gram @ q_op
        if np.max(np.abs(gq - gq.T)) > 1e-10 * max(1.0, np.max(np.abs(gq))):
            raise ValueError("Q is not self-adjoint w.r.t. the Gram pairing")
        self.q_op = q_op
        self.b = space.zeros() if b is None else space.check_element(b)
        self.c = float(c)
        self._gq = 0.5 * (gq + gq.T)
        self._lu = None

    @classmethod
    def isotropic(cls, space, rho=1.0, b=None, c=0.0):
        """``(rho/2) |x|_G^2`` plus optional linear and constant parts."""
        return cls(space, rho * np.eye(space.dim), b=b, c=c)

    def _solve_q(self, rhs):
        if self._lu is None:
            self._lu = scipy.linalg.lu_factor(self.q_op)
        return scipy.linalg.lu_solve(self._lu, rhs)

    def value(self, x):
        x = self.space.check_element(x)
        return float(0.5 * x @ self._gq @ x + self.space.inner(self.b, x) + self.c)

    def grad(self, x):
        return self.q_op @ self.space.check_element(x) + self.b

    def hess_euc(self, x):
        return self._gq

    def conj_pair(self, p):
        p = self.space.check_element(p)
        rhs = p - self.b
        xstar = self._solve_q(rhs)
        # a singular Q makes lu_solve return garbage silently; the conjugate
        # is +inf off range(Q), so verify the solve before trusting it
        back = self.q_op @ xstar
        err = float(np.linalg.norm(back - rhs))
        if not np.isfinite(err) or err > 1e-8 * (1.0 + np.linalg.norm(rhs)):
            raise ConjugateError(
                "quadratic conjugate slope lies outside the operator range",
                err)
        val = 0.5 * self.space.inner(rhs, xstar) - self.c
        return val, xstar

    def prox(self, lam, x):
        if lam <= 0:
            raise ValueError(f"prox parameter must be positive, got {lam}")
        x = self.space.check_element(x)
        mat = self.q_op + np.eye(self.space.dim) / lam
        return np.linalg.solve(mat, x / lam - self.b)

    def conjugate_function(self):
        """The conjugate as a closed-form Quadratic (requires invertible Q)."""
        qinv = self._solve_q(np.eye(self.space.dim))
        b_star = -self._solve_q(self.b)
        c_star = 0.5 * self.space.inner(self.b, -b_star) - self.c
        return Quadratic(self.space, qinv, b=b_star, c=c_star)

    def shift_quadratic(self, rho):
        return Quadratic(self.space, self.q_op + rho * np.eye(self.space.dim),
                         b=self.b, c=self.c)


class PowerNorm(ConvexFunction):
    """``phi(x) = (w/m) |x|_G^m`` with exponent ``m > 1`` and weight ``w > 0``."""

    def __init__(self, space, exponent, weight=1.0):
        super().__init__(space)
        if exponent <= 1:
            raise ValueError("power-norm exponent must exceed 1")
        if weight <= 0:
            raise ValueError("power-norm weight must be positive")
        self.exponent = float(exponent)
        self.weight = float(weight)

    @property
    def dual_exponent(self):
        return self.exponent / (self.exponent - 1.0)

    def value(self, x):
        return self.weight * self.space.norm(x) ** self.exponent / self.exponent

    def grad(self, x):
        x = self.space.check_element(x)
        r = self.space.norm(x)
        if r == 0.0:
            return self.space.zeros()
        return self.weight * r ** (self.exponent - 2.0) * x

    def hess_euc(self, x):
        m, w = self.exponent, self.weight
        if m < 2:
            return None
        r = self.space.norm(x)
        gram = self.space.gram
        gx = gram @ self.space.check_element(x)
        if r == 0.0:
            return np.zeros_like(gram) if m > 2 else w * gram
        return w * ((m - 2.0) * r ** (m - 4.0) * np.outer(gx, gx)
                    + r ** (m - 2.0) * gram)

    def conj_pair(self, p):
        p = self.space.check_element(p)
        s = self.space.norm(p)
        mstar = self.dual_exponent
        val = s ** mstar / (mstar * self.weight ** (mstar - 1.0))
        if s == 0.0:
            return val, self.space.zeros()
        xstar = (s / self.weight) ** (1.0 / (self.exponent - 1.0)) * p / s
        return val, xstar

    def prox(self, lam, x):
        if lam <= 0:
            raise ValueError(f"prox parameter must be positive, got {lam}")
        x = self.space.check_element(x)
        r = self.space.norm(x)
        if r == 0.0:
            return self.space.zeros()
        # radial scalar equation: w lam t^(m-1) + t = r, root in [0, r]
        m, w = self.exponent, self.weight

        def rad(t):
            return w * lam * t ** (m - 1.0) + t - r

        t = scipy.optimize.brentq(rad, 0.0, r, xtol=1e-15, rtol=1e-15)
        return (t / r) * x


class SeparablePower(ConvexFunction):
    """``phi(x) = sum_i w_i |x_i|^m / m`` with quadrature weights ``w_i > 0``.

    Requires a diagonal Gram matrix so the coordinatewise duality stays exact.
    """

    def __init__(self, space, exponent, weights=1.0):
        super().__init__(space)
        if exponent <= 1:
            raise ValueError("exponent must exceed 1")
        diag = np.diag(space.gram)
        if np.max(np.abs(space.gram - np.diag(diag))) > 1e-12 * max(1.0, diag.max()):
            raise ValueError("separable powers require a diagonal Gram matrix")
        self._gdiag = diag
        self.exponent = float(exponent)
        self.weights = np.broadcast_to(
            np.asarray(weights, dtype=float), (space.dim,)
        ).copy()
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def value(self, x):
        x = self.space.check_element(x)
        return float(np.sum(self.weights * np.abs(x) ** self.exponent)
                     / self.exponent)

    def grad(self, x):
        x = self.space.check_element(x)
        m = self.exponent
        return self.weights * np.abs(x) ** (m - 2.0) * x / self._gdiag

    def hess_euc(self, x):
        m = self.exponent
        if m < 2:
            return None
        x = self.space.check_element(x)
        return np.diag((m - 1.0) * self.weights * np.abs(x) ** (m - 2.0))

    def conj_pair(self, p):
        p = self.space.check_element(p)
        m, mstar = self.exponent, self.exponent / (self.exponent - 1.0)
        s = self._gdiag * p
        val = float(np.sum(np.abs(s) ** mstar
                           / (mstar * self.weights ** (mstar - 1.0))))
        xstar = np.sign(s) * (np.abs(s) / self.weights) ** (1.0 / (m - 1.0))
        return val, xstar

    def prox(self, lam, x):
        if lam <= 0:
            raise ValueError(f"prox parameter must be positive, got {lam}")
        x = self.space.check_element(x)
        m = self.exponent
        if m == 2.0:
            return self._gdiag * x / (lam * self.weights + self._gdiag)
        out = np.zeros_like(x)
        for i, xi in enumerate(x):
            if xi == 0.0:
                continue
            w, g, r = self.weights[i], self._gdiag[i], abs(xi)

            def coord(t):
                return lam * w * t ** (m - 1.0) + g * (t - r)

            t = scipy.optimize.brentq(coord, 0.0, r, xtol=1e-15, rtol=1e-15)
            out[i] = np.sign(xi) * t
        return out


class Sum(ConvexFunction):
    """Pointwise sum of convex functions on a common space."""

    def __init__(self, space, parts):
        super().__init__(space)
        if not parts:
            raise ValueError("need at least one summand")
        for part in parts:
            if part.space.dim != space.dim:
                raise ValueError("all summands must live on the same space")
        self.parts = list(parts)

    def value(self, x):
        return float(sum(p.value(x) for p in self.parts))

    def grad(self, x):
        g = self.space.zeros()
        for p in self.parts:
            g = g + p.grad(x)
        return g

    def hess_euc(self, x):
        total = np.zeros((self.space.dim, self.space.dim))
        for p in self.parts:
            h = p.hess_euc(x)
            if h is None:
                return None
            total += h
        return total

    def _newton_seed(self, p):
        for part in self.parts:
            if isinstance(part, Quadratic):
                try:
                    return part.conj_grad(p)
                except Exception:
                    continue
        return self.space.zeros()

    def conj_pair(self, p):
        return _conjugate_by_solve(self, p, seed=self._newton_seed(p))

    def shift_quadratic(self, rho):
        merged = []
        shifted = False
        for part in self.parts:
            if isinstance(part, Quadratic) and not shifted:
                merged.append(part.shift_quadratic(rho))
                shifted = True
            else:
                merged.append(part)
        if not shifted:
            merged.append(Quadratic.isotropic(self.space, rho))
        return Sum(self.space, merged)


class LinearPrecompose(ConvexFunction):
    """``phi(x) = inner(A x + s)`` for a linear map ``A`` and shift ``s``.

    A quadratic inner function with a square map collapses to an explicit
    Quadratic at construction; other combinations keep the composite form and
    use the generic inner solves for duality.
    """

    def __new__(cls, space, inner_fn, a_map, shift=None):
        if isinstance(inner_fn, Quadratic) and a_map.matrix is not None \
                and a_map.matrix.shape[0] == a_map.matrix.shape[1] == space.dim:
            return cls._collapse(space, inner_fn, a_map, shift)
        return super().__new__(cls)

    @staticmethod
    def _collapse(space, inner_fn, a_map, shift):
        amat = a_map.matrix
        cod = a_map.codomain
        s = cod.zeros() if shift is None else cod.check_element(shift)
        gq_c = cod.gram @ inner_fn.q_op
        gb_c = cod.gram @ inner_fn.b
        # expand <Ax+s, Q(Ax+s)>_Gc / 2 + <b, Ax+s>_Gc + c in x
        q_op = space.solve_gram(amat.T @ gq_c @ amat)
        lin = space.solve_gram(amat.T @ (gq_c @ s + gb_c))
        const = float(0.5 * s @ gq_c @ s + gb_c @ s + inner_fn.c)
        return Quadratic(space, q_op, b=lin, c=const)

    def __init__(self, space, inner_fn, a_map, shift=None):
        super().__init__(space)
        self.inner_fn = inner_fn
        self.a_map = a_map
        cod = a_map.codomain
        self.shift = cod.zeros() if shift is None else cod.check_element(shift)

    def value(self, x):
        return self.inner_fn.value(self.a_map(x) + self.shift)

    def grad(self, x):
        return self.a_map.adjoint(self.inner_fn.grad(self.a_map(x) + self.shift))

    def hess_euc(self, x):
        h = self.inner_fn.hess_euc(self.a_map(x) + self.shift)
        if h is None:
            return None
        amat = self.a_map.dense()
        return amat.T @ h @ amat


class MoreauSmoothed(ConvexFunction):
    """The Moreau envelope of a convex function, as a function object.

    ``phi_a(x) = min_z phi(z) + |x - z|^2 / (2a)`` is differentiable with
    ``grad phi_a(x) = (x - prox_a(x)) / a`` even when ``phi`` is not, and
    approximates ``phi`` from below with O(a) bias at solutions.  Duality is
    exact: ``(phi_a)* = phi* + a |.|^2 / 2``, and the envelope's prox reduces
    to the base prox at the combined parameter.
    """

    def __init__(self, base, alpha):
        super().__init__(base.space)
        if alpha <= 0:
            raise ValueError("smoothing parameter must be positive")
        self.base = base
        self.alpha = float(alpha)

    def value(self, x):
        return moreau_envelope(self.base, self.alpha, x)[0]

    def grad(self, x):
        return moreau_envelope(self.base, self.alpha, x)[1]

    def conj_pair(self, p):
        val, xstar = self.base.conj_pair(p)
        p = self.space.check_element(p)
        return (val + 0.5 * self.alpha * self.space.inner(p, p),
                xstar + self.alpha * p)

    def prox(self, lam, x):
        # prox of the envelope via the base prox at parameter alpha + lam
        if lam <= 0:
            raise ValueError(f"prox parameter must be positive, got {lam}")
        x = self.space.check_element(x)
        z = self.base.prox(self.alpha + lam, x)
        return x - lam * (x - z) / (self.alpha + lam)


class Restriction(ConvexFunction):
    """A convex function of a coordinate slice, extended by zero elsewhere.

    Requires the ambient Gram matrix to have no cross terms between the slice
    and its complement, and to restrict exactly to the inner function's Gram
    matrix on the slice; only then do gradients scatter cleanly.
    """

    def __init__(self, space, inner_fn, indices):
        super().__init__(space)
        indices = np.asarray(indices, dtype=int)
        if indices.size != inner_fn.space.dim:
            raise ValueError("index set must match the inner dimension")
        sub = space.gram[np.ix_(indices, indices)]
        if not np.allclose(sub, inner_fn.space.gram, atol=1e-12):
            raise ValueError("ambient Gram must restrict to the inner Gram")
        mask = np.ones(space.dim, dtype=bool)
        mask[indices] = False
        cross = space.gram[np.ix_(indices, np.where(mask)[0])]
        if cross.size and np.max(np.abs(cross)) > 1e-14:
            raise ValueError("Gram couples the slice to its complement")
        self.inner_fn = inner_fn
        self.indices = indices

    def value(self, x):
        return self.inner_fn.value(self.space.check_element(x)[self.indices])

    def grad(self, x):
        g = self.space.zeros()
        g[self.indices] = self.inner_fn.grad(
            self.space.check_element(x)[self.indices])
        return g

    def hess_euc(self, x):
        h_in = self.inner_fn.hess_euc(
            self.space.check_element(x)[self.indices])
        if h_in is None:
            return None
        h = np.zeros((self.space.dim, self.space.dim))
        h[np.ix_(self.indices, self.indices)] = h_in
        return h


class NumericConvex(ConvexFunction):
    """A convex function given only by a callable, restricted to a box.

    Duality runs a multi-start quasi-Newton maximization inside the box and
    raises :class:`ConjugateError` with a gap estimate when it cannot certify
    convergence.  Subgradients fall back to central differences, with a
    prox-based approximation at detected kinks.
    """

    def __init__(self, space, func, box, grad=None):
        super().__init__(space)
        lo, hi = box
        self.lo = np.broadcast_to(np.asarray(lo, float), (space.dim,)).copy()
        self.hi = np.broadcast_to(np.asarray(hi, float), (space.dim,)).copy()
        if np.any(self.hi <= self.lo):
            raise ValueError("box must have positive volume")
        self.func = func
        self._grad = grad
        self.last_subgradient_exact = True

    def value(self, x):
        x = self.space.check_element(x)
        if np.any(x < self.lo - 1e-12) or np.any(x > self.hi + 1e-12):
            return np.inf
        return float(self.func(x))

    def _fd_grad_euc(self, x, h=1e-6):
        g = np.zeros(self.space.dim)
        for i in range(self.space.dim):
            e = np.zeros(self.space.dim)
            e[i] = h
            g[i] = (self.func(x + e) - self.func(x - e)) / (2 * h)
        return g

    def _is_kink(self, x, h=1e-6):
        # one-sided slopes disagree at a kink even when the central
        # difference looks clean (e.g. |x| at the origin)
        f0 = self.func(x)
        for i in range(self.space.dim):
            e = np.zeros(self.space.dim)
            e[i] = h
            fwd = (self.func(x + e) - f0) / h
            bwd = (f0 - self.func(x - e)) / h
            if abs(fwd - bwd) > 1e-2 * (1.0 + abs(fwd) + abs(bwd)):
                return True
        return False

    def grad(self, x):
        x = self.space.check_element(x)
        if self._grad is not None:
            self.last_subgradient_exact = True
            return np.asarray(self._grad(x), dtype=float)
        if self._is_kink(x):
            # fall back to the minimal-norm prox-based subgradient,
            # with a derivative-free inner solve (no gradient exists here)
            self.last_subgradient_exact = False
            lam = 1e-6
            scale = 1e-3 * (1.0 + float(np.linalg.norm(x)))

            def obj(z):
                d = z - x
                return self.value(z) + 0.5 * float(
                    d @ self.space.gram @ d) / lam

            res = scipy.optimize.minimize(
                obj, x, method="Nelder-Mead",
                options={"xatol": 1e-12 * scale, "fatol": 1e-18,
                         "maxiter": 4000})
            return (x - np.asarray(res.x, float)) / lam
        self.last_subgradient_exact = True
        return self.space.solve_gram(self._fd_grad_euc(x))

    def conj_pair(self, p):
        return _conjugate_by_solve(self, p, bounds=(self.lo, self.hi),
                                   multistart=True,
                                   derivative_free=self._grad is None)

    def prox(self, lam, x):
        if lam <= 0:
            raise ValueError(f"prox parameter must be positive, got {lam}")
        return _prox_by_solve(self, lam, x, bounds=(self.lo, self.hi))


# -- generic inner solves ------------------------------------------------------

_INNER_DIM_LIMIT = 64


def _multistart_points(space, p, bounds, rng):
    pts = [space.zeros(), np.asarray(p, float)]
    if bounds is not None:
        lo, hi = bounds
        mid = 0.5 * (lo + hi)
        pts = [np.clip(q, lo, hi) for q in pts] + [mid]
        for _ in range(4):
            pts.append(lo + (hi - lo) * rng.random(space.dim))
    else:
        for _ in range(4):
            pts.append(space.random(rng))
    return pts


def _conjugate_by_solve(phi, p, seed=None, bounds=None, multistart=False,
                        derivative_free=False, tol=1e-11):
    """Evaluate ``phi*(p)`` by maximizing ``<p, x>_G - phi(x)``.

    The objective is concave, so local ascent from any start finds the global
    supremum; multiple starts guard against flat or boxed regions.  Newton is
    used when the summand Hessians exist (any dimension: the gradient
    residual certifies the optimum); the blind multi-start machinery is
    restricted to dim <= 64 so that an unverifiable search never masquerades
    as an exact value.  A value-only kind gets multi-start quasi-Newton plus
    a derivative-free polish and is judged by the polish improvement
    (finite-difference gradients are too noisy for a gtol test).
    """
    space = phi.space
    p = space.check_element(p)
    gp = space.apply_gram(p)

    # Newton on grad phi(x) = p when an analytic Hessian is available
    if not multistart:
        x = space.zeros() if seed is None else np.array(seed, dtype=float)
        hess = phi.hess_euc(x)
        if hess is not None:
            x, res = _newton_root(phi, p, x)
            if res <= tol * (1.0 + space.norm(p)):
                val = float(gp @ x) - phi.value(x)
                return val, x

    if space.dim > _INNER_DIM_LIMIT:
        raise ConjugateError(
            f"multi-start numeric conjugation limited to dim <= "
            f"{_INNER_DIM_LIMIT}, got {space.dim}", np.inf)

    def neg(xe):
        v = phi.value(xe)
        if not np.isfinite(v):
            return 1e50, np.zeros_like(xe)
        grad_euc = space.apply_gram(phi.grad(xe))
        return -(float(gp @ xe) - v), -(gp - grad_euc)

    def neg_value(xe):
        v = phi.value(xe)
        if not np.isfinite(v):
            return 1e50
        return -(float(gp @ xe) - v)

    rng = np.random.default_rng(0)
    starts = _multistart_points(space, p, bounds, rng)
    if seed is not None:
        starts.insert(0, np.asarray(seed, float))
    best = None
    scipy_bounds = None
    if bounds is not None:
        scipy_bounds = list(zip(bounds[0], bounds[1]))
    for x0 in starts:
        res = scipy.optimize.minimize(
            neg, x0, jac=True, method="L-BFGS-B", bounds=scipy_bounds,
            options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    xbest, fbest = np.asarray(best.x, float), float(best.fun)
    if derivative_free:
        polish = scipy.optimize.minimize(
            neg_value, xbest, method="Powell", bounds=scipy_bounds,
            options={"xtol": 1e-12, "ftol": 1e-14, "maxiter": 2000})
        improvement = fbest - float(polish.fun)
        if polish.fun < fbest:
            xbest, fbest = np.asarray(polish.x, float), float(polish.fun)
        if improvement > 1e-6 * (1.0 + abs(fbest)):
            raise ConjugateError("conjugate maximization did not stabilize",
                                 improvement)
        return -fbest, xbest
    gnorm = float(np.linalg.norm(best.jac))
    interior = True
    if bounds is not None:
        lo, hi = bounds
        margin = 1e-9 * (1.0 + np.abs(hi - lo))
        interior = bool(np.all(xbest > lo + margin)
                        and np.all(xbest < hi - margin))
    if gnorm > 1e-6 * (1.0 + space.norm(p)) and interior:
        raise ConjugateError("conjugate maximization did not converge", gnorm)
    return -fbest, xbest


def _newton_root(phi, p, x0, max_iter=100):
    """Damped Newton for ``grad phi(x) = p``; returns (x, Gram residual norm)."""
    space = phi.space
    x = np.array(x0, dtype=float)

    def residual(z):
        return phi.grad(z) - p

    r = residual(x)
    rnorm = space.norm(r)
    for _ in range(max_iter):
        if rnorm <= 1e-14 * (1.0 + space.norm(p)):
            break
        hess = phi.hess_euc(x)
        if hess is None:
            break
        try:
            step = -np.linalg.solve(hess, space.apply_gram(r))
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, space.apply_gram(r), rcond=None)[0]
        t = 1.0
        for _ in range(40):
            xn = x + t * step
            rn = residual(xn)
            rn_norm = space.norm(rn)
            if rn_norm < rnorm * (1 - 1e-4 * t) or rn_norm < 1e-15:
                x, r, rnorm = xn, rn, rn_norm
                break
            t *= 0.5
        else:
            break
    return x, rnorm


def _prox_by_solve(phi, lam, x, bounds=None, tol=1e-10):
    """Minimize ``phi(z) + |x - z|_G^2 / (2 lam)`` with Newton or L-BFGS-B."""
    space = phi.space
    x = space.check_element(x)

    hess0 = phi.hess_euc(x)
    if hess0 is not None and bounds is None:
        z = np.array(x, dtype=float)
        for _ in range(100):
            r = phi.grad(z) + (z - x) / lam
            rnorm = space.norm(r)
            if rnorm <= tol * (1.0 + space.norm(x)):
                return z
            hess = phi.hess_euc(z) + space.gram / lam
            step = -np.linalg.solve(hess, space.apply_gram(r))
            t = 1.0
            improved = False
            for _ in range(40):
                zn = z + t * step
                rn = space.norm(phi.grad(zn) + (zn - x) / lam)
                if rn < rnorm:
                    z = zn
                    improved = True
                    break
                t *= 0.5
            if not improved:
                break
        r = space.norm(phi.grad(z) + (z - x) / lam)
        if r <= 1e-7 * (1.0 + space.norm(x)):
            return z
        raise ProxError("prox Newton iteration stalled", r)

    def obj(ze):
        v = phi.value(ze)
        if not np.isfinite(v):
            return 1e50, np.zeros_like(ze)
        d = ze - x
        quad = 0.5 * float(d @ space.gram @ d) / lam
        grad_euc = space.apply_gram(phi.grad(ze)) + space.apply_gram(d) / lam
        return v + quad, grad_euc

    scipy_bounds = None
    if bounds is not None:
        scipy_bounds = list(zip(bounds[0], bounds[1]))
    res = scipy.optimize.minimize(
        obj, np.clip(x, bounds[0], bounds[1]) if bounds else x,
        jac=True, method="L-BFGS-B", bounds=scipy_bounds,
        options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
    gnorm = float(np.linalg.norm(res.jac))
    if gnorm > 1e-6 * (1.0 + space.norm(x)) and bounds is None:
        raise ProxError("prox minimization did not converge", gnorm)
    return np.asarray(res.x, dtype=float)


def moreau_envelope(phi, lam, x):
    """Moreau envelope value and gradient ``(x - prox) / lam`` at ``x``."""
    z = phi.prox(lam, x)
    d = x - z
    val = phi.value(z) + 0.5 * phi.space.inner(d, d) / lam
    return val, d / lam


# -- functional wrappers matching the operation-level contracts -----------------


def eval_fn(phi, x):
    return phi.value(x)


def conjugate(phi, p):
    return phi.conj_value(p)


def prox(phi, lam, x):
    return phi.prox(lam, x)


def subgradient(phi, x):
    return phi.grad(x)


def fenchel_young_gap(phi, x, p):
    """``phi(x) + phi*(p) - <x, p>_G`` (nonnegative; zero iff p is a subgradient)."""
    return phi.value(x) + phi.conj_value(p) - phi.space.inner(x, p)


def convexity_defect(phi, rng, count=100, scale=1.0):
    """Sampled violation of the secant inequality, normalized by value scale."""
    worst = 0.0
    for _ in range(count):
        x = phi.space.random(rng, scale)
        y = phi.space.random(rng, scale)
        t = rng.random()
        mid = phi.value(t * x + (1 - t) * y)
        chord = t * phi.value(x) + (1 - t) * phi.value(y)
        ref = 1.0 + abs(chord)
        worst = max(worst, (mid - chord) / ref)
    return worst
