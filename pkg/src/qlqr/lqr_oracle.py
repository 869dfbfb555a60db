"""Model-based ground truth for the learner.

Solves the discrete-time Riccati fixed point for a linear model and
quadratic cost, producing the optimal state-feedback gain and the exact
quadratic action-value matrix the data-driven learner should converge
to.  Sized for desk-scale models (n <= 8), so the solver is a plain
fixed-point iteration rather than a Schur decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import invert_small, symmetrize
from .plant import LinearModel


class NoConvergence(Exception):
    """Riccati iteration failed: unstabilizable or badly scaled model."""


@dataclass(frozen=True)
class CostWeights:
    """Quadratic running cost x'qx + u'ru; q PSD, r positive definite."""

    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        q = symmetrize(self.q)
        r = np.atleast_2d(np.asarray(self.r, dtype=float))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        q_eigs = np.linalg.eigvalsh(q)
        if q_eigs.min() < -1e-12 * max(1.0, abs(q_eigs).max()):
            raise ValueError("q must be positive semidefinite")
        if np.linalg.eigvalsh(r).min() <= 0:
            raise ValueError("r must be positive definite")


@dataclass(frozen=True)
class RiccatiSolution:
    p: np.ndarray         # cost-to-go matrix, x' p x
    k: np.ndarray         # feedback gain, u = k x
    m_star: np.ndarray    # exact action-value matrix, [x; u]' m_star [x; u]
    iterations: int
    residual: float       # sup-norm of one extra fixed-point step at p


def riccati_step(model: LinearModel, w: CostWeights, p):
    """One fixed-point update p <- q + a'pa - a'pb (r + b'pb)^-1 b'pa."""
    a, b = model.a, model.b
    btp = b.T @ p
    gram = w.r + btp @ b
    return symmetrize(w.q + a.T @ p @ a - a.T @ p @ b @ np.linalg.solve(gram, btp @ a))


def solve_dare(model: LinearModel, w: CostWeights, tol: float = 1e-12,
               max_iter: int = 1_000_000) -> RiccatiSolution:
    """Iterate the Riccati map from p0 = q until the step stalls.

    tol is relative: iteration stops once the sup-norm change falls
    below tol * max(1, ||p||_inf); an absolute test is meaningless here
    because the fixed point can be ~1e5 while float64 resolves ~1e-11
    of it.  Raises NoConvergence on iteration exhaustion, non-finite
    iterates, or an unstable closed loop (all symptoms of a model the
    cost cannot stabilize).
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    p = symmetrize(w.q)
    iterations = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for iterations in range(1, max_iter + 1):
            p_next = riccati_step(model, w, p)
            if not np.all(np.isfinite(p_next)):
                raise NoConvergence(f"iterates diverged after {iterations} steps")
            done = np.abs(p_next - p).max() <= tol * max(1.0, np.abs(p_next).max())
            p = p_next
            if done:
                break
        else:
            raise NoConvergence(f"no fixed point within {max_iter} iterations")

    k = gain_from_p(model, w, p)
    rho = closed_loop_spectral_radius(model, k)
    if rho >= 1.0:
        raise NoConvergence(f"closed loop unstable (spectral radius {rho:.6f})")
    residual = float(np.abs(riccati_step(model, w, p) - p).max())
    return RiccatiSolution(p=p, k=k, m_star=qmatrix_from_p(model, w, p),
                           iterations=iterations, residual=residual)


def gain_from_p(model: LinearModel, w: CostWeights, p):
    """Optimal gain k = -(r + b'pb)^-1 b'pa, so that u = k x."""
    b = model.b
    return -invert_small(w.r + b.T @ p @ b) @ (b.T @ p @ model.a)


def qmatrix_from_p(model: LinearModel, w: CostWeights, p):
    """Exact action-value matrix [[q + a'pa, a'pb], [b'pa, r + b'pb]]."""
    a, b = model.a, model.b
    p = symmetrize(p)
    return symmetrize(np.block([
        [w.q + a.T @ p @ a, a.T @ p @ b],
        [b.T @ p @ a, w.r + b.T @ p @ b],
    ]))


def closed_loop_spectral_radius(model: LinearModel, k) -> float:
    """Largest eigenvalue magnitude of a + b k."""
    k = np.atleast_2d(np.asarray(k, dtype=float))
    return float(np.abs(np.linalg.eigvals(model.a + model.b @ k)).max())
