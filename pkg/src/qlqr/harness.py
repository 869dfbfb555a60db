"""Experiment orchestration and run logging.

run_experiment closes the loop between a QLearner and the simulated
cart-pole (nonlinear by default, or its linearization), optionally
swaps the plant parameters mid-run to emulate a hardware fault, and
tracks the distance between the learned gain and the model-based gain
recomputed for whatever the true parameters currently are.  The
model-based solution is a metrics-only side channel: the learner never
sees it.

A run produces a RunRecord which serializes to three delimited text
files (steps, events, summary) written with shortest round-trip float
formatting so that re-reading reproduces the record exactly and equal
runs produce byte-identical files.

One experiment is one sequential simulation; independent runs (seed
sweeps) may execute in parallel processes as long as they write to
distinct directories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lqr_oracle import CostWeights, solve_dare
from .plant import PlantParams, apply_fault, euler_step, linearize
from .qlearning import LearnerConfig, QLearner, init_x

EVENT_FAULT = "Fault"
EVENT_KINDS = ("WindowSolved", "EpisodeReset", "DivergenceReset", EVENT_FAULT)

STEPS_HEADER = "t,theta,theta_dot,y,y_dot,u,reward,gain_distance"
EVENTS_HEADER = "t,kind"

CONVERGENCE_FRACTION = 0.05  # converged when within 5% of the oracle gain norm

PLANT_MODES = ("nonlinear", "linearized")


class ConfigError(Exception):
    """An experiment configuration violates an invariant."""


def default_weights() -> CostWeights:
    """Stage-cost weights used by both shipped experiments."""
    return CostWeights(q=np.diag([100.0, 1.0, 10.0, 1.0]), r=np.array([[1.0]]))


@dataclass(frozen=True)
class FaultSpec:
    """Scheduled pendulum fault: rescale mass and length at a set time."""

    time: float
    scale_m: float
    scale_l: float


@dataclass
class ExperimentConfig:
    plant: PlantParams = field(default_factory=PlantParams)
    weights: CostWeights = field(default_factory=default_weights)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    dt: float = 0.01
    duration: float = 60.0
    fault: FaultSpec | None = None
    warm_start_m: np.ndarray | None = None
    plant_mode: str = "nonlinear"


def validate_config(cfg: ExperimentConfig):
    if not cfg.dt > 0:
        raise ConfigError("run.dt must be > 0")
    if not cfg.duration > 0:
        raise ConfigError("run.duration must be > 0")
    if cfg.duration < cfg.dt:
        raise ConfigError("run.duration must be at least one step (>= dt)")
    if cfg.plant_mode not in PLANT_MODES:
        raise ConfigError(f"run.plant_mode must be one of {PLANT_MODES}")
    if cfg.fault is not None:
        if not 0.0 <= cfg.fault.time < cfg.duration:
            raise ConfigError("run.fault_time must lie within the run")
        if not (cfg.fault.scale_m > 0 and cfg.fault.scale_l > 0):
            raise ConfigError("fault scale factors must be > 0")
    if cfg.warm_start_m is not None and np.asarray(cfg.warm_start_m).shape != (5, 5):
        raise ConfigError("run.warm_start_m must be a 5x5 matrix")
    try:
        cfg.learner.validate()
    except ValueError as exc:
        raise ConfigError(f"learner.{exc}") from exc


@dataclass(frozen=True)
class Event:
    t: float
    kind: str


@dataclass
class RunRecord:
    """Everything one run produced, in memory."""

    t: np.ndarray
    states: np.ndarray          # one row per step, [theta, theta_dot, y, y_dot]
    inputs: np.ndarray
    rewards: np.ndarray
    gain_distance: np.ndarray   # ||k_learned - k_oracle|| per step
    events: list
    final_gain: np.ndarray
    oracle_gain: np.ndarray     # oracle for the parameters at the end of the run
    converged_at: float | None
    seed: int
    config_echo: dict
    final_m: np.ndarray | None = None

    def same_as(self, other: "RunRecord") -> bool:
        """Exact equality of every serialized field."""
        arrays = ("t", "states", "inputs", "rewards", "gain_distance",
                  "final_gain", "oracle_gain")
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and self.events == other.events
            and self.converged_at == other.converged_at
            and self.seed == other.seed
            and self.config_echo == other.config_echo
            and (
                (self.final_m is None and other.final_m is None)
                or (self.final_m is not None and other.final_m is not None
                    and np.array_equal(self.final_m, other.final_m))
            )
        )


def gain_distance(k1, k2) -> float:
    """Euclidean norm of the difference between two gain vectors."""
    d = np.asarray(k1, dtype=float).ravel() - np.asarray(k2, dtype=float).ravel()
    return float(np.linalg.norm(d))


def _transition(params: PlantParams, cfg: ExperimentConfig):
    if cfg.plant_mode == "linearized":
        model = linearize(params, cfg.dt)
        a, b = model.a, model.b.ravel()
        return lambda x, u: a @ x + b * u
    return lambda x, u: euler_step(x, u, params, cfg.dt)


def _n_steps(duration: float, dt: float) -> int:
    return int(math.floor(duration / dt + 1e-9))


def _sustained_convergence_time(t, distances, tolerances):
    """First time after which the distance stays under tolerance for good."""
    bad = np.where(distances >= tolerances)[0]
    if bad.size == 0:
        return float(t[0])
    nxt = bad[-1] + 1
    if nxt >= len(t):
        return None
    return float(t[nxt])


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """Simulate the learning loop for the configured duration."""
    validate_config(cfg)
    params = cfg.plant
    oracle = solve_dare(linearize(params, cfg.dt), cfg.weights)
    plant_fn = _transition(params, cfg)
    learner = QLearner(cfg.weights, cfg.learner, m0=cfg.warm_start_m)

    n = _n_steps(cfg.duration, cfg.dt)
    t = np.arange(n) * cfg.dt
    states = np.zeros((n, 4))
    inputs = np.zeros(n)
    rewards = np.zeros(n)
    distances = np.zeros(n)
    tolerances = np.zeros(n)
    events: list[Event] = []

    fault_pending = cfg.fault is not None
    for i in range(n):
        now = float(t[i])
        if fault_pending and now >= cfg.fault.time - 1e-12:
            params = apply_fault(params, cfg.fault.scale_m, cfg.fault.scale_l)
            oracle = solve_dare(linearize(params, cfg.dt), cfg.weights)
            plant_fn = _transition(params, cfg)
            events.append(Event(t=now, kind=EVENT_FAULT))
            fault_pending = False
        res = learner.step(plant_fn)
        states[i] = res.x
        inputs[i] = res.u
        rewards[i] = res.reward
        distances[i] = gain_distance(learner.k, oracle.k)
        tolerances[i] = CONVERGENCE_FRACTION * float(np.linalg.norm(oracle.k))
        events.extend(Event(t=now, kind=kind) for kind in res.events)

    return RunRecord(
        t=t,
        states=states,
        inputs=inputs,
        rewards=rewards,
        gain_distance=distances,
        events=events,
        final_gain=learner.k.ravel().copy(),
        oracle_gain=oracle.k.ravel().copy(),
        converged_at=_sustained_convergence_time(t, distances, tolerances),
        seed=cfg.learner.rng_seed,
        config_echo=flatten_config(cfg),
        final_m=learner.m.copy(),
    )


def simulate_fixed_gain(cfg: ExperimentConfig, k=None) -> RunRecord:
    """Closed-loop run with a constant gain: no learning, no noise."""
    validate_config(cfg)
    oracle = solve_dare(linearize(cfg.plant, cfg.dt), cfg.weights)
    if k is None:
        k = oracle.k
    k = np.atleast_2d(np.asarray(k, dtype=float))
    plant_fn = _transition(cfg.plant, cfg)
    rng = np.random.default_rng(cfg.learner.rng_seed)
    x = init_x(cfg.learner.nu, rng)

    n = _n_steps(cfg.duration, cfg.dt)
    t = np.arange(n) * cfg.dt
    states = np.zeros((n, 4))
    inputs = np.zeros(n)
    rewards = np.zeros(n)
    w = cfg.weights
    for i in range(n):
        u = float((k @ x)[0])
        states[i] = x
        inputs[i] = u
        rewards[i] = float(x @ w.q @ x) + float(u * w.r[0, 0] * u)
        x = plant_fn(x, u)

    dist = gain_distance(k, oracle.k)
    distances = np.full(n, dist)
    tolerances = np.full(n, CONVERGENCE_FRACTION * float(np.linalg.norm(oracle.k)))
    return RunRecord(
        t=t,
        states=states,
        inputs=inputs,
        rewards=rewards,
        gain_distance=distances,
        events=[],
        final_gain=k.ravel().copy(),
        oracle_gain=oracle.k.ravel().copy(),
        converged_at=_sustained_convergence_time(t, distances, tolerances),
        seed=cfg.learner.rng_seed,
        config_echo=flatten_config(cfg),
        final_m=None,
    )


# --- serialization ---------------------------------------------------------

def _fmt(v) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(v))


def _fmt_vector(v) -> str:
    return ", ".join(_fmt(x) for x in np.asarray(v, dtype=float).ravel())


def flatten_config(cfg: ExperimentConfig) -> dict:
    """Resolved configuration as flat section.key -> string pairs."""
    echo = {
        "plant.m": _fmt(cfg.plant.m),
        "plant.m_cart": _fmt(cfg.plant.m_cart),
        "plant.l": _fmt(cfg.plant.l),
        "plant.g": _fmt(cfg.plant.g),
        "weights.q_diag": _fmt_vector(np.diag(cfg.weights.q)),
        "weights.r": _fmt(cfg.weights.r[0, 0]),
        "learner.n_s": str(cfg.learner.n_s),
        "learner.noise_std": _fmt(cfg.learner.noise_std),
        "learner.h_threshold": _fmt(cfg.learner.h_threshold),
        "learner.mu": _fmt(cfg.learner.mu),
        "learner.nu": _fmt(cfg.learner.nu),
        "learner.seed": str(cfg.learner.rng_seed),
        "learner.bounds_lo": _fmt_vector(cfg.learner.bounds_lo),
        "learner.bounds_hi": _fmt_vector(cfg.learner.bounds_hi),
        "run.dt": _fmt(cfg.dt),
        "run.duration": _fmt(cfg.duration),
        "run.plant_mode": cfg.plant_mode,
    }
    if cfg.fault is not None:
        echo["run.fault_time"] = _fmt(cfg.fault.time)
        echo["run.fault_scale_m"] = _fmt(cfg.fault.scale_m)
        echo["run.fault_scale_l"] = _fmt(cfg.fault.scale_l)
    if cfg.warm_start_m is not None:
        echo["run.warm_start_m"] = _fmt_vector(cfg.warm_start_m)
    return echo


def write_log(rec: RunRecord, out_dir):
    """Write steps.csv, events.csv and summary.txt under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    lines = [STEPS_HEADER]
    for i in range(len(rec.t)):
        row = [rec.t[i], *rec.states[i], rec.inputs[i], rec.rewards[i],
               rec.gain_distance[i]]
        lines.append(",".join(_fmt(v) for v in row))
    (out / "steps.csv").write_text("\n".join(lines) + "\n")

    lines = [EVENTS_HEADER]
    lines.extend(f"{_fmt(ev.t)},{ev.kind}" for ev in rec.events)
    (out / "events.csv").write_text("\n".join(lines) + "\n")

    lines = [
        f"final_gain = {_fmt_vector(rec.final_gain)}",
        f"oracle_gain = {_fmt_vector(rec.oracle_gain)}",
        "converged_at = " + ("none" if rec.converged_at is None
                             else _fmt(rec.converged_at)),
        f"seed = {rec.seed}",
    ]
    if rec.final_m is not None:
        lines.append(f"final_m = {_fmt_vector(rec.final_m)}")
    lines.extend(f"{key} = {value}" for key, value in rec.config_echo.items())
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def read_log(out_dir) -> RunRecord:
    """Rebuild a RunRecord from the three files written by write_log."""
    out = Path(out_dir)

    step_lines = (out / "steps.csv").read_text().strip().split("\n")
    if step_lines[0] != STEPS_HEADER:
        raise ValueError(f"unexpected steps header: {step_lines[0]!r}")
    rows = np.array([[float(v) for v in line.split(",")]
                     for line in step_lines[1:]])
    if rows.size == 0:
        rows = rows.reshape(0, 8)

    event_lines = (out / "events.csv").read_text().strip().split("\n")
    if event_lines[0] != EVENTS_HEADER:
        raise ValueError(f"unexpected events header: {event_lines[0]!r}")
    events = []
    for line in event_lines[1:]:
        t_str, kind = line.split(",")
        events.append(Event(t=float(t_str), kind=kind))

    summary = {}
    for line in (out / "summary.txt").read_text().strip().split("\n"):
        key, _, value = line.partition(" = ")
        summary[key] = value

    def _parse_vector(s):
        return np.array([float(v) for v in s.split(",")])

    converged = summary["converged_at"]
    final_m = None
    if "final_m" in summary:
        final_m = _parse_vector(summary["final_m"]).reshape(5, 5)
    config_echo = {k: v for k, v in summary.items() if "." in k}

    return RunRecord(
        t=rows[:, 0],
        states=rows[:, 1:5],
        inputs=rows[:, 5],
        rewards=rows[:, 6],
        gain_distance=rows[:, 7],
        events=events,
        final_gain=_parse_vector(summary["final_gain"]),
        oracle_gain=_parse_vector(summary["oracle_gain"]),
        converged_at=None if converged == "none" else float(converged),
        seed=int(summary["seed"]),
        config_echo=config_echo,
        final_m=final_m,
    )
