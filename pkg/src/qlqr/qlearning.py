"""Batch least-squares Q-learning for the cart-pole balancing task.

The action-value function of the underlying linear-quadratic problem is
exactly quadratic, Q(x, u) = [x; u]' M [x; u] with M symmetric, so the
learner never needs a function approximator: it collects a window of
n_s transitions, turns each into a one-step lookahead target

    q_tar = x'Qx + u'Ru + [x_next; K x_next]' M [x_next; K x_next]

(M and K frozen over the window), re-fits M by least squares in the
half-vectorized basis, and re-extracts the greedy gain K = -M22^-1 M21.
Exploration is the greedy action plus additive Gaussian noise, which
keeps the regression generically full rank.

Two recovery rules keep the loop alive without supervision: when the
state leaves its bounding box only the state is re-initialized (the
window keeps filling across the boundary), and when ||M||_F exceeds a
threshold both M and the state are re-initialized and the window is
dropped.

The learner is a single-threaded state machine advanced by step(); all
randomness flows through one generator owned by the instance, so a
given (config, seed) pair replays the same trajectory exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    SingularNormalEquations,
    SvecBasis,
    block_diag,
    least_squares,
    symmetrize,
)
from .lqr_oracle import CostWeights

N_STATE = 4
N_INPUT = 1

EVENT_WINDOW_SOLVED = "WindowSolved"
EVENT_EPISODE_RESET = "EpisodeReset"
EVENT_DIVERGENCE_RESET = "DivergenceReset"

_BASIS = SvecBasis(N_STATE + N_INPUT)


class SingularM22(Exception):
    """Action-action block of the parameter matrix is not invertible."""


@dataclass
class LearnerConfig:
    """Knobs of the learning loop; defaults suit the linearized plant."""

    n_s: int = 20
    noise_std: float = 1.0
    h_threshold: float = 1e6
    bounds_lo: np.ndarray = field(
        default_factory=lambda: np.array([-0.5, -3.0, -3.0, -5.0]))
    bounds_hi: np.ndarray = field(
        default_factory=lambda: np.array([0.5, 3.0, 3.0, 5.0]))
    mu: float = 10.0
    nu: float = 5e-3
    rng_seed: int = 0

    def validate(self):
        if self.n_s < _BASIS.size:
            raise ValueError(f"n_s must be >= {_BASIS.size} (free parameter count)")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be > 0")
        if not self.h_threshold > 0:
            raise ValueError("h_threshold must be > 0")
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if not self.nu > 0:
            raise ValueError("nu must be > 0")
        lo = np.asarray(self.bounds_lo, dtype=float)
        hi = np.asarray(self.bounds_hi, dtype=float)
        if lo.shape != (N_STATE,) or hi.shape != (N_STATE,):
            raise ValueError("bounds must be length-4 vectors")
        if not (np.all(lo < 0.0) and np.all(hi > 0.0)):
            raise ValueError("bounds must straddle the origin componentwise")


@dataclass
class SampleWindow:
    """Rolling batch of (state, input, target) triples for one regression."""

    capacity: int
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    targets: list = field(default_factory=list)

    def append(self, x, u, target):
        if self.full():
            raise ValueError("window already full")
        self.states.append(np.asarray(x, dtype=float))
        self.inputs.append(float(u))
        self.targets.append(float(target))

    def full(self) -> bool:
        return len(self.states) == self.capacity

    def clear(self):
        self.states.clear()
        self.inputs.clear()
        self.targets.clear()

    def __len__(self) -> int:
        return len(self.states)


def init_m(w: CostWeights, mu: float):
    """Initial parameter matrix mu * blockdiag(q, r); its greedy gain is 0."""
    if not mu > 0:
        raise ValueError("mu must be > 0")
    return mu * block_diag(w.q, w.r)


def init_x(nu: float, rng: np.random.Generator):
    """Near-upright start: only theta is nonzero, uniform within +-nu/2."""
    if not nu > 0:
        raise ValueError("nu must be > 0")
    return np.array([1.0, 0.0, 0.0, 0.0]) * rng.uniform(-0.5, 0.5) * nu


def extract_gain(m_q, n_inputs: int = N_INPUT):
    """Greedy gain k = -m22^-1 m21 from the partitioned parameter matrix.

    Raises SingularM22 when the action-action block is negligible
    against ||M||_F; callers treat that as a diverged estimate.
    """
    m_q = np.asarray(m_q, dtype=float)
    n = m_q.shape[0] - n_inputs
    m22 = m_q[n:, n:]
    m21 = m_q[n:, :n]
    smallest = np.linalg.svd(m22, compute_uv=False).min()
    if smallest <= 1e-12 * np.linalg.norm(m_q):
        raise SingularM22(f"m22 singular value {smallest:.3e}")
    return -np.linalg.solve(m22, m21)


def greedy_with_noise(k, x, noise_std: float, rng: np.random.Generator) -> float:
    """Exploratory action: greedy feedback plus one Gaussian draw."""
    return float((k @ x)[0]) + rng.normal(0.0, noise_std)


def running_cost(x, u: float, w: CostWeights) -> float:
    """Quadratic stage cost x'qx + u'ru (scalar input)."""
    return float(x @ w.q @ x) + float(u * w.r[0, 0] * u)


def q_target(x, u: float, x_next, k, m_q, w: CostWeights) -> float:
    """One-step lookahead target: stage cost plus greedy successor value."""
    z_next = np.concatenate([x_next, k @ x_next])
    return running_cost(x, u, w) + float(z_next @ m_q @ z_next)


def regress_update(window: SampleWindow):
    """Fit the symmetric matrix whose quadratic form best matches the window.

    When the targets are generated exactly by some symmetric matrix and
    the regressors span the parameter space, that matrix is recovered
    to solver precision.  Propagates SingularNormalEquations when they
    do not span it; the caller decides how to recover.
    """
    rows = [
        _BASIS.regressor(np.concatenate([x, [u]]))
        for x, u in zip(window.states, window.inputs)
    ]
    p, _residual = least_squares(np.vstack(rows), np.asarray(window.targets))
    return _BASIS.decode(p)


@dataclass
class StepResult:
    """Everything the caller needs to log one control period."""

    x: np.ndarray      # state the input acted on
    u: float           # applied force
    reward: float      # stage cost at (x, u)
    events: list


class QLearner:
    """Drives one balancing experiment, one control period per step().

    The plant is supplied per call as a transition function
    plant_fn(x, u) -> x_next, so the same learner runs against the
    nonlinear simulator or its linearization without knowing which.
    """

    def __init__(self, weights: CostWeights, config: LearnerConfig, m0=None):
        config.validate()
        self.weights = weights
        self.cfg = config
        self.rng = np.random.default_rng(config.rng_seed)
        if m0 is None:
            self.m = init_m(weights, config.mu)
        else:
            m0 = np.asarray(m0, dtype=float)
            if m0.shape != (N_STATE + N_INPUT, N_STATE + N_INPUT):
                raise ValueError("warm-start matrix must be 5x5")
            self.m = symmetrize(m0)
        self.k = extract_gain(self.m)
        self.x = init_x(config.nu, self.rng)
        self.window = SampleWindow(config.n_s)
        self.t = 0

    def step(self, plant_fn) -> StepResult:
        """Run one iteration: act, observe, target, maybe re-fit, resets."""
        cfg = self.cfg
        events = []

        x_t = self.x
        u = greedy_with_noise(self.k, x_t, cfg.noise_std, self.rng)
        reward = running_cost(x_t, u, self.weights)
        x_next = np.asarray(plant_fn(x_t, u), dtype=float)
        target = q_target(x_t, u, x_next, self.k, self.m, self.weights)
        self.window.append(x_t, u, target)
        self.x = x_next

        degenerate_gain = False
        if self.window.full():
            try:
                m_new = regress_update(self.window)
                self.k = extract_gain(m_new)
                self.m = m_new
                events.append(EVENT_WINDOW_SOLVED)
            except SingularNormalEquations:
                pass  # too little exploration in this window; keep the old fit
            except SingularM22:
                degenerate_gain = True
            self.window.clear()

        out_of_bounds = np.any(self.x < cfg.bounds_lo) or np.any(self.x > cfg.bounds_hi)
        if out_of_bounds:
            self.x = init_x(cfg.nu, self.rng)
            events.append(EVENT_EPISODE_RESET)

        if degenerate_gain or np.linalg.norm(self.m) > cfg.h_threshold:
            self.m = init_m(self.weights, cfg.mu)
            self.k = extract_gain(self.m)
            self.x = init_x(cfg.nu, self.rng)
            self.window.clear()
            events.append(EVENT_DIVERGENCE_RESET)

        self.t += 1
        return StepResult(x=x_t, u=u, reward=reward, events=events)
