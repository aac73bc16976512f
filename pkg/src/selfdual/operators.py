"""Linear and nonlinear operators on a :class:`~selfdual.space.Space`.

Three structural properties carry the whole variational machinery and are
checked numerically rather than assumed:

* antisymmetry of a linear map ``B``: ``<y, Bx> + <By, x> = 0``;
* the boundary identity ``<x, Bx> = (|b2 x|^2 - |b1 x|^2) / 2`` for maps that
  are skew only modulo a pair of boundary traces ``(b1, b2)``;
* conservativity of a nonlinear map: ``<Lx, x> = 0``.

All adjoints are taken with respect to the Gram pairing of the space the
operator acts on, so for a coordinate matrix ``B`` the adjoint matrix is
``G^-1 B^T G``.
"""

from __future__ import annotations

import numpy as np

from .space import Space


class LinearMap:
    """A linear operator between spaces, with its Gram-adjoint.

    Built either from a dense coordinate matrix (the adjoint is derived) or
    from a pair of callables ``apply``/``adjoint_apply``.
    """

    def __init__(self, domain, codomain=None, matrix=None, apply=None,
                 adjoint_apply=None):
        self.domain = domain
        self.codomain = codomain if codomain is not None else domain
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=float)
            if matrix.shape != (self.codomain.dim, self.domain.dim):
                raise ValueError(
                    f"matrix shape {matrix.shape} does not map "
                    f"dim {self.domain.dim} into dim {self.codomain.dim}"
                )
            self.matrix = matrix
            # adjoint w.r.t. the Gram pairings: G_dom^-1 M^T G_cod
            self._adjoint_matrix = self.domain.solve_gram(
                matrix.T @ self.codomain.gram
            )
            self._apply = lambda x: self.matrix @ x
            self._adjoint = lambda y: self._adjoint_matrix @ y
        else:
            if apply is None or adjoint_apply is None:
                raise ValueError("need either a matrix or apply+adjoint_apply")
            self.matrix = None
            self._adjoint_matrix = None
            self._apply = apply
            self._adjoint = adjoint_apply

    @classmethod
    def zero(cls, domain, codomain=None):
        codomain = codomain if codomain is not None else domain
        return cls(domain, codomain,
                   matrix=np.zeros((codomain.dim, domain.dim)))

    @classmethod
    def identity(cls, space):
        return cls(space, space, matrix=np.eye(space.dim))

    @classmethod
    def from_file(cls, domain, path, codomain=None):
        from .space import load_matrix

        return cls(domain, codomain, matrix=load_matrix(path))

    def __call__(self, x):
        return self._apply(self.domain.check_element(x))

    def adjoint(self, y):
        return self._adjoint(self.codomain.check_element(y))

    def dense(self):
        """Coordinate matrix, assembling it column by column if necessary."""
        if self.matrix is not None:
            return self.matrix
        cols = [self(e) for e in np.eye(self.domain.dim)]
        return np.stack(cols, axis=1)


class BoundaryPair:
    """A pair of trace operators ``(b1, b2)`` into two boundary spaces."""

    def __init__(self, b1, b2):
        if b1.domain is not b2.domain and b1.domain.dim != b2.domain.dim:
            raise ValueError("b1 and b2 must share their domain")
        self.b1 = b1
        self.b2 = b2
        self.domain = b1.domain
        self.space1 = b1.codomain
        self.space2 = b2.codomain

    @classmethod
    def zero(cls, domain, dim1=1, dim2=1):
        h1 = Space.euclidean(dim1)
        h2 = Space.euclidean(dim2)
        return cls(LinearMap.zero(domain, h1), LinearMap.zero(domain, h2))


class ConservativeMap:
    """A nonlinear map with ``<Lx, x> = 0``, exposing apply and a vjp.

    ``vjp(x, w)`` returns the Gram-adjoint Jacobian action ``(DL(x))^*_G w``.
    When no analytic vjp is supplied, a fourth-order central finite-difference
    fallback with ``h = 1e-5 (1 + |x|)`` is used (``vjp_mode == "fd"``).
    """

    def __init__(self, space, apply, vjp=None):
        self.space = space
        self._apply = apply
        self._vjp = vjp
        self.vjp_mode = "analytic" if vjp is not None else "fd"

    @classmethod
    def zero(cls, space):
        return cls(space, lambda x: np.zeros(space.dim),
                   vjp=lambda x, w: np.zeros(space.dim))

    @classmethod
    def from_linear(cls, linear_map):
        """Wrap a skew linear map as a (trivially conservative) map."""
        return cls(linear_map.domain, lambda x: linear_map(x),
                   vjp=lambda x, w: linear_map.adjoint(w))

    def __call__(self, x):
        return self._apply(self.space.check_element(x))

    def vjp(self, x, w):
        if self._vjp is not None:
            return self._vjp(self.space.check_element(x),
                             self.space.check_element(w))
        h = 1e-5 * (1.0 + self.space.norm(x))
        return vjp_fd(self, x, w, h)


def vjp_fd(conservative_map, x, w, h):
    """Finite-difference vector-Jacobian product ``(DL(x))^*_G w``.

    Differentiates the scalar ``g(x) = <L(x), w>_G`` coordinate-wise with the
    fourth-order central stencil ``(-g2 + 8 g1 - 8 g_1 + g_2) / (12 h)`` and
    maps the Euclidean gradient back through the Gram matrix.
    """
    if h <= 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    space = conservative_map.space
    x = space.check_element(x)
    gw = space.apply_gram(w)

    def g(z):
        return float(gw @ conservative_map(z))

    grad = np.zeros(space.dim)
    for i in range(space.dim):
        e = np.zeros(space.dim)
        e[i] = 1.0
        grad[i] = (
            -g(x + 2 * h * e) + 8 * g(x + h * e)
            - 8 * g(x - h * e) + g(x - 2 * h * e)
        ) / (12 * h)
    return space.solve_gram(grad)


def jvp_fd(func, x, d, h=None):
    """Central directional derivative of a vector map, exact for quadratics."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
    return (func(x + h * d) - func(x - h * d)) / (2 * h)


# -- structural defect measurements -------------------------------------------


def skew_defect(space, linear_map, samples):
    """Largest normalized antisymmetry violation ``|<y,Bx> + <By,x>|`` over samples.

    ``samples`` is a nonempty list of ``(x, y)`` pairs.  Zero iff ``B`` is
    antisymmetric on the sampled directions.
    """
    if not samples:
        raise ValueError("need at least one sample pair")
    worst = 0.0
    for x, y in samples:
        val = abs(space.inner(y, linear_map(x)) + space.inner(linear_map(y), x))
        scale = 1.0 + space.norm(x) * space.norm(y)
        worst = max(worst, val / scale)
    return worst


def boundary_skew_defect(space, linear_map, boundary_pair, samples):
    """Violation of ``<x, Bx> = (|b2 x|^2 - |b1 x|^2) / 2`` over sample vectors."""
    if not samples:
        raise ValueError("need at least one sample")
    b1, b2 = boundary_pair.b1, boundary_pair.b2
    h1, h2 = boundary_pair.space1, boundary_pair.space2
    worst = 0.0
    for x in samples:
        lhs = space.inner(x, linear_map(x))
        rhs = 0.5 * (h2.norm(b2(x)) ** 2 - h1.norm(b1(x)) ** 2)
        worst = max(worst, abs(lhs - rhs) / (1.0 + space.norm(x) ** 2))
    return worst


def conservativity_defect(space, conservative_map, samples):
    """Largest normalized value of ``|<Lx, x>|`` over sample vectors."""
    if not samples:
        raise ValueError("need at least one sample")
    worst = 0.0
    for x in samples:
        val = abs(space.inner(conservative_map(x), x))
        worst = max(worst, val / (1.0 + space.norm(x) ** 2))
    return worst


def adjoint_defect(space, linear_map, samples):
    """Consistency of the stored adjoint: ``|<y,Bx> - <B*y,x>|`` normalized."""
    worst = 0.0
    for x, y in samples:
        val = abs(space.inner(y, linear_map(x))
                  - space.inner(linear_map.adjoint(y), x))
        worst = max(worst, val / (1.0 + space.norm(x) * space.norm(y)))
    return worst


def vjp_defect(conservative_map, samples, h=1e-6):
    """Adjoint-consistency of the vjp against directional finite differences.

    Checks ``<w, DL(x) d>_G = <vjp(x, w), d>_G`` on ``(x, w, d)`` triples.
    """
    space = conservative_map.space
    worst = 0.0
    for x, w, d in samples:
        lhs = space.inner(w, jvp_fd(conservative_map, x, d, h=h))
        rhs = space.inner(conservative_map.vjp(x, w), d)
        scale = 1.0 + space.norm(w) * space.norm(d) * (1.0 + space.norm(x))
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def split_symmetric(space, matrix):
    """Split a coordinate matrix into its Gram-symmetric and Gram-skew parts.

    Returns ``(sym, skew)`` with ``matrix = sym + skew``, ``sym`` self-adjoint
    and ``skew`` antisymmetric w.r.t. the space's pairing.
    """
    matrix = np.asarray(matrix, dtype=float)
    adj = space.solve_gram(matrix.T @ space.gram)
    sym = 0.5 * (matrix + adj)
    skew = 0.5 * (matrix - adj)
    return sym, skew


def sample_pairs(space, rng, count, scale=1.0):
    """Seeded list of random ``(x, y)`` pairs for defect checks."""
    return [(space.random(rng, scale), space.random(rng, scale))
            for _ in range(count)]


def sample_vectors(space, rng, count, scale=1.0):
    return [space.random(rng, scale) for _ in range(count)]
