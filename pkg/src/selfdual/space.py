"""Finite-dimensional Hilbert spaces with an explicit Gram matrix.

Every pairing in this package goes through one symmetric positive-definite
Gram matrix ``G``: the inner product of coordinate vectors ``x`` and ``y``
is ``x^T G y``.  Primal points, dual slopes, and plain vectors all live in
the same coordinate space and differ only through this pairing, which is
exact in finite dimension.

Elements are plain 1-D ``numpy`` arrays; there is deliberately no wrapper
class around them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class DimensionMismatchError(ValueError):
    """Raised when a vector or matrix has the wrong shape for a space."""


def load_matrix(path):
    """Load a dense matrix from plain text (rows of whitespace-separated decimals).

    A file with a single row is returned as a ``(1, n)`` matrix, never as a
    1-D array.
    """
    mat = np.loadtxt(path, dtype=float, ndmin=2)
    return mat


@dataclass(frozen=True, eq=False)
class Space:
    """A finite-dimensional Hilbert space ``R^dim`` with inner product ``x^T G y``.

    The Gram matrix must be symmetric within 1e-12 relative and positive
    definite; definiteness is checked by attempting a Cholesky factorization
    at construction.
    """

    dim: int
    gram: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError(f"space dimension must be positive, got {self.dim}")
        gram = np.asarray(self.gram, dtype=float)
        if gram.shape != (self.dim, self.dim):
            raise DimensionMismatchError(
                f"gram has shape {gram.shape}, expected {(self.dim, self.dim)}"
            )
        sym_err = np.max(np.abs(gram - gram.T))
        if sym_err > 1e-12 * max(1.0, np.max(np.abs(gram))):
            raise ValueError(f"gram is not symmetric (max asymmetry {sym_err:.3e})")
        gram = 0.5 * (gram + gram.T)
        try:
            chol = scipy.linalg.cholesky(gram, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise ValueError("gram is not positive definite") from exc
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def euclidean(cls, dim):
        """Space with the identity Gram matrix."""
        return cls(dim, np.eye(dim))

    @classmethod
    def weighted(cls, weights):
        """Space with a diagonal Gram matrix of positive weights."""
        weights = np.asarray(weights, dtype=float)
        return cls(weights.size, np.diag(weights))

    @classmethod
    def from_file(cls, path):
        """Build a space from a Gram matrix stored in the plain-text format."""
        gram = load_matrix(path)
        return cls(gram.shape[0], gram)

    # -- basic vector calculus ------------------------------------------------

    def check_element(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatchError(
                f"element has shape {x.shape}, expected ({self.dim},)"
            )
        return x

    def inner(self, x, y):
        """Inner product ``x^T G y``."""
        x = self.check_element(x)
        y = self.check_element(y)
        return float(x @ self.gram @ y)

    def norm(self, x):
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def apply_gram(self, x):
        """Map coordinates to their Euclidean-dual representation ``G x``."""
        return self.gram @ self.check_element(x)

    def solve_gram(self, y):
        """Inverse of :meth:`apply_gram` (a triangular solve pair)."""
        y = np.asarray(y, dtype=float)
        z = scipy.linalg.solve_triangular(self._chol, y, lower=True)
        return scipy.linalg.solve_triangular(self._chol.T, z, lower=False)

    def zeros(self):
        return np.zeros(self.dim)

    def random(self, rng, scale=1.0):
        """A Gaussian coordinate vector, for sampling-based checks."""
        return scale * rng.standard_normal(self.dim)

    @property
    def gram_is_identity(self):
        return bool(np.allclose(self.gram, np.eye(self.dim), atol=1e-14))


def inner(space, x, y):
    """Functional form of :meth:`Space.inner`."""
    return space.inner(x, y)


def product_space(space_u, space_v):
    """Product of two spaces with the block-diagonal Gram matrix.

    Returns the product space plus slicers mapping product coordinates to the
    two factors.
    """
    dim = space_u.dim + space_v.dim
    gram = scipy.linalg.block_diag(space_u.gram, space_v.gram)
    prod = Space(dim, gram)

    def split(x):
        x = prod.check_element(x)
        return x[: space_u.dim], x[space_u.dim :]

    def join(u, v):
        return np.concatenate([space_u.check_element(u), space_v.check_element(v)])

    return prod, split, join
