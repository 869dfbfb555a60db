"""Small dense linear-algebra helpers for quadratic-form regression.

Everything operates on plain numpy arrays and is sized for the 5x5
problems this package solves.  All functions are pure; nothing here
holds state, so any of it may be called concurrently.
"""

from __future__ import annotations

import numpy as np

RCOND_MIN = 1e-14


class SingularMatrix(Exception):
    """Determinant too small relative to the matrix scale."""


class SingularNormalEquations(Exception):
    """The least-squares normal matrix is numerically rank deficient."""


def symmetrize(m):
    """Return (m + m') / 2 so downstream code never sees float asymmetry."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def kron(a, b):
    """Kronecker product of two 1-d vectors: out[i*len(b) + j] = a[i]*b[j]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise ValueError("kron expects nonempty 1-d vectors")
    return np.kron(a, b)


def vec(m):
    """Row-major flattening of a matrix: rows stacked into one vector.

    Satisfies vec(M) . (z kron z) == z' M z for symmetric M.
    """
    return np.asarray(m, dtype=float).ravel().copy()


class SvecBasis:
    """Half-vectorization of symmetric dim x dim matrices.

    A symmetric matrix has dim*(dim+1)/2 free entries; fitting a
    quadratic form in the full vec basis is structurally rank deficient
    because z kron z repeats every off-diagonal monomial.  This basis
    keeps one parameter per free entry (upper triangle, row-major) and
    builds regressor rows r(z) with r(z) . encode(M) == z' M z, which
    requires the factor 2 on off-diagonal monomials.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        pairs = [(i, j) for i in range(dim) for j in range(i, dim)]
        self.size = len(pairs)
        self._rows = np.array([i for i, _ in pairs])
        self._cols = np.array([j for _, j in pairs])
        self._scale = np.where(self._rows == self._cols, 1.0, 2.0)

    def encode(self, m):
        """Upper-triangle entries of a symmetric matrix, row-major."""
        m = np.asarray(m, dtype=float)
        return m[self._rows, self._cols].copy()

    def decode(self, p):
        """Rebuild the symmetric matrix; exact inverse of encode."""
        p = np.asarray(p, dtype=float)
        m = np.zeros((self.dim, self.dim))
        m[self._rows, self._cols] = p
        m[self._cols, self._rows] = p
        return m

    def regressor(self, z):
        """Row r with r . encode(M) == z' M z."""
        z = np.asarray(z, dtype=float)
        return z[self._rows] * z[self._cols] * self._scale


def least_squares(a, b, ridge: float = 0.0):
    """Solve min_p ||a p - b||^2 (+ ridge ||p||^2) by normal equations.

    Columns of `a` are rescaled to unit norm before forming the normal
    matrix so that the rank test measures genuine degeneracy rather
    than mismatched units; the solution is mapped back afterwards, so
    the returned p solves the unscaled problem.  Returns (p, residual)
    with residual = ||a p - b||_2.

    Raises SingularNormalEquations when the (equilibrated) normal
    matrix has reciprocal condition below 1e-14, which in the learning
    loop signals insufficient exploration.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if a.ndim != 2:
        raise ValueError("a must be a 2-d matrix")
    if a.shape[0] < a.shape[1]:
        raise ValueError("need at least as many rows as columns")
    if b.size != a.shape[0]:
        raise ValueError("b length must equal the number of rows of a")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite inputs")

    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0.0):
        raise SingularNormalEquations("zero column in the regressor matrix")
    scaled = a / norms
    g = scaled.T @ scaled
    if ridge > 0.0:
        # ridge penalty lives in the original coordinates
        g = g + ridge * np.diag(1.0 / norms**2)
    rcond = 1.0 / np.linalg.cond(g)
    if not np.isfinite(rcond) or rcond < RCOND_MIN:
        raise SingularNormalEquations(
            f"normal matrix reciprocal condition {rcond:.3e} below {RCOND_MIN:.0e}"
        )
    p = np.linalg.solve(g, scaled.T @ b) / norms
    if not np.all(np.isfinite(p)):
        raise SingularNormalEquations("non-finite solution")
    residual = float(np.linalg.norm(a @ p - b))
    return p, residual


def ridge_fallback(a) -> float:
    """Default ridge weight to retry a solve that raised on singularity."""
    a = np.asarray(a, dtype=float)
    return 1e-9 * float(np.trace(a.T @ a)) / a.shape[1]


def invert_small(m):
    """Invert a small (dim <= 8) well-conditioned matrix.

    The singularity test is relative: |det| is compared against 1e-14
    times the Hadamard bound (product of row norms).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("square matrix required")
    if m.shape[0] > 8:
        raise ValueError("invert_small is sized for dim <= 8")
    det = float(np.linalg.det(m))
    scale = float(np.prod(np.linalg.norm(m, axis=1)))
    if scale == 0.0 or not np.isfinite(det) or abs(det) < 1e-14 * scale:
        raise SingularMatrix(f"determinant {det:.3e} below 1e-14 * {scale:.3e}")
    return np.linalg.solve(m, np.eye(m.shape[0]))


def block_diag(a, b):
    """Block-diagonal stack of two square matrices."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    na, nb = a.shape[0], b.shape[0]
    out = np.zeros((na + nb, na + nb))
    out[:na, :na] = a
    out[na:, na:] = b
    return out
