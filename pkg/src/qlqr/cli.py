"""Command-line entry point.

Subcommands:
  exp1      learn the balancing gain from scratch on the nonlinear plant
  exp2      warm-started run with a mid-run pendulum fault (half mass
            and length), re-learning the gain online
  riccati   print the model-based solution for the configured plant
  simulate  fixed-gain closed loop, no learning
  sweep     repeat exp1 over consecutive seeds and report statistics

Every run writes steps.csv, events.csv and summary.txt into the output
directory; the summary embeds the fully resolved configuration and seed
so a run can be reproduced bit-exactly.  Exit codes: 0 success, 2 usage
error, 3 configuration error, 4 I/O error, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .harness import (
    ConfigError,
    ExperimentConfig,
    FaultSpec,
    RunRecord,
    gain_distance,
    run_experiment,
    simulate_fixed_gain,
    validate_config,
    write_log,
)
from .lqr_oracle import CostWeights, closed_loop_spectral_radius, solve_dare
from .plant import PlantParams, linearize
from .qlearning import LearnerConfig

_SCHEMA = {
    "plant": ("m", "m_cart", "l", "g"),
    "weights": ("q_diag", "r"),
    "learner": ("n_s", "noise_std", "h_threshold", "mu", "nu", "seed",
                "bounds_lo", "bounds_hi"),
    "run": ("dt", "duration", "plant_mode", "fault_time", "fault_scale_m",
            "fault_scale_l", "warm_start_m"),
}


def packaged_config(name: str) -> Path:
    """Path of a configuration file shipped inside the package."""
    return Path(resources.files("qlqr").joinpath(f"configs/{name}"))


def _parse_raw(path) -> dict:
    """Read an INI-style file into {section: {key: string}} with checks."""
    import configparser

    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh, source=str(path))
    except FileNotFoundError:
        raise
    except configparser.Error as exc:
        # configparser errors already carry the line number
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    data = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}] in {path}")
        for key, value in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key} in {path}")
            data.setdefault(section, {})[key] = value
    return data


def _apply_overrides(data: dict, overrides):
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        section, dot, field = key.strip().partition(".")
        if not dot or section not in _SCHEMA or field not in _SCHEMA[section]:
            raise ConfigError(f"unknown override key {key.strip()!r}")
        data.setdefault(section, {})[field] = value.strip()


def _get_float(data, section, key, default=None):
    raw = data.get(section, {}).get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing required key {section}.{key}")
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: not a number: {raw!r}") from exc


def _get_int(data, section, key, default):
    raw = data.get(section, {}).get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: not an integer: {raw!r}") from exc


def _get_vector(data, section, key, default):
    raw = data.get(section, {}).get(key)
    if raw is None:
        return default
    try:
        return np.array([float(v) for v in raw.split(",")])
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: not a comma-separated vector: {raw!r}") from exc


def load_warm_start(path) -> np.ndarray:
    """Final parameter matrix persisted by a previous run.

    Accepts a run directory or its summary file.
    """
    p = Path(path)
    if p.is_dir():
        p = p / "summary.txt"
    for line in p.read_text().strip().split("\n"):
        key, _, value = line.partition(" = ")
        if key == "final_m":
            return np.array([float(v) for v in value.split(",")]).reshape(5, 5)
    raise ConfigError(f"{p} carries no final parameter matrix")


def load_config(path, overrides=()) -> ExperimentConfig:
    """Parse a key-value config file, apply overrides, validate."""
    data = _parse_raw(path)
    _apply_overrides(data, overrides)

    def build(section, ctor, **kwargs):
        try:
            return ctor(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{section}.{exc}") from exc

    plant = build(
        "plant", PlantParams,
        m=_get_float(data, "plant", "m", 0.2),
        m_cart=_get_float(data, "plant", "m_cart", 0.5),
        l=_get_float(data, "plant", "l", 0.3),
        g=_get_float(data, "plant", "g", 9.8),
    )
    q_diag = _get_vector(data, "weights", "q_diag",
                         np.array([100.0, 1.0, 10.0, 1.0]))
    if q_diag.shape != (4,):
        raise ConfigError("weights.q_diag must have 4 entries")
    weights = build("weights", CostWeights,
                    q=np.diag(q_diag),
                    r=np.array([[_get_float(data, "weights", "r", 1.0)]]))
    learner = LearnerConfig(
        n_s=_get_int(data, "learner", "n_s", 20),
        noise_std=_get_float(data, "learner", "noise_std", 1.0),
        h_threshold=_get_float(data, "learner", "h_threshold", 1e6),
        mu=_get_float(data, "learner", "mu", 10.0),
        nu=_get_float(data, "learner", "nu", 5e-3),
        rng_seed=_get_int(data, "learner", "seed", 0),
        bounds_lo=_get_vector(data, "learner", "bounds_lo",
                              np.array([-0.5, -3.0, -3.0, -5.0])),
        bounds_hi=_get_vector(data, "learner", "bounds_hi",
                              np.array([0.5, 3.0, 3.0, 5.0])),
    )

    fault = None
    run = data.get("run", {})
    if "fault_time" in run:
        fault = FaultSpec(
            time=_get_float(data, "run", "fault_time"),
            scale_m=_get_float(data, "run", "fault_scale_m"),
            scale_l=_get_float(data, "run", "fault_scale_l"),
        )
    elif "fault_scale_m" in run or "fault_scale_l" in run:
        raise ConfigError("run.fault_scale_* given without run.fault_time")

    warm = None
    if "warm_start_m" in run:
        warm = load_warm_start(run["warm_start_m"])

    cfg = ExperimentConfig(
        plant=plant,
        weights=weights,
        learner=learner,
        dt=_get_float(data, "run", "dt", 0.01),
        duration=_get_float(data, "run", "duration", 60.0),
        fault=fault,
        warm_start_m=warm,
        plant_mode=run.get("plant_mode", "nonlinear"),
    )
    validate_config(cfg)
    return cfg


# --- commands ---------------------------------------------------------------

def _resolve_config(args, default_name) -> ExperimentConfig:
    path = args.config if args.config else packaged_config(default_name)
    cfg = load_config(path, args.set or ())
    if args.seed is not None:
        cfg.learner.rng_seed = args.seed
    return cfg


def _print_run(label: str, rec: RunRecord):
    print(f"{label}: final_gain = [{', '.join(f'{v:.4f}' for v in rec.final_gain)}]")
    print(f"{label}: oracle_gain = [{', '.join(f'{v:.4f}' for v in rec.oracle_gain)}]")
    conv = "never" if rec.converged_at is None else f"{rec.converged_at:.2f} s"
    print(f"{label}: converged_at = {conv}")


def cmd_exp1(args) -> int:
    cfg = _resolve_config(args, "exp1.cfg")
    rec = run_experiment(cfg)
    write_log(rec, args.out)
    _print_run("exp1", rec)
    print(f"exp1: logs written to {args.out}")
    return 0


def cmd_exp2(args) -> int:
    cfg = _resolve_config(args, "exp2.cfg")
    if cfg.warm_start_m is None:
        # no warm start supplied: learn one from scratch first
        warm_cfg = load_config(packaged_config("exp1.cfg"))
        warm_rec = run_experiment(warm_cfg)
        write_log(warm_rec, Path(args.out) / "warmup")
        cfg.warm_start_m = warm_rec.final_m
        print(f"exp2: warm start learned from scratch (seed {warm_cfg.learner.rng_seed})")
    rec = run_experiment(cfg)
    write_log(rec, args.out)
    _print_run("exp2", rec)
    if cfg.fault is not None and rec.converged_at is not None:
        print(f"exp2: re-converged {rec.converged_at - cfg.fault.time:.2f} s after the fault")
    print(f"exp2: logs written to {args.out}")
    return 0


def cmd_riccati(args) -> int:
    cfg = _resolve_config(args, "exp1.cfg")
    model = linearize(cfg.plant, cfg.dt)
    sol = solve_dare(model, cfg.weights)
    print(f"dt = {cfg.dt!r}")
    print(f"iterations = {sol.iterations}")
    print(f"residual = {sol.residual!r}")
    for i, row in enumerate(sol.p):
        print(f"p[{i}] = {', '.join(repr(float(v)) for v in row)}")
    print(f"k = {', '.join(repr(float(v)) for v in sol.k.ravel())}")
    for i, row in enumerate(sol.m_star):
        print(f"m_star[{i}] = {', '.join(repr(float(v)) for v in row)}")
    rho = closed_loop_spectral_radius(model, sol.k)
    print(f"spectral_radius = {rho!r}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args, "exp1.cfg")
    k = None
    if args.gain:
        k = np.array([float(v) for v in args.gain.split(",")])
        if k.shape != (4,):
            raise ConfigError("--gain must supply 4 comma-separated numbers")
    rec = simulate_fixed_gain(cfg, k)
    write_log(rec, args.out)
    _print_run("simulate", rec)
    print(f"simulate: logs written to {args.out}")
    return 0


def _sweep_one(payload):
    cfg, seed, out_dir = payload
    cfg = replace(cfg, learner=replace(cfg.learner, rng_seed=seed))
    rec = run_experiment(cfg)
    write_log(rec, out_dir)
    return seed, rec.converged_at, gain_distance(rec.final_gain, rec.oracle_gain)


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args, "exp1.cfg")
    base = cfg.learner.rng_seed
    out = Path(args.out)
    payloads = [
        (cfg, base + i, out / f"run_{base + i:03d}") for i in range(args.runs)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, payloads))
    else:
        results = [_sweep_one(p) for p in payloads]
    results.sort()

    converged = [r for r in results if r[1] is not None]
    lines = [f"runs = {args.runs}",
             f"converged = {len(converged)}",
             f"rate = {len(converged) / args.runs!r}"]
    if converged:
        times = [r[1] for r in converged]
        lines.append(f"mean_converged_at = {float(np.mean(times))!r}")
    for seed, conv, dist in results:
        conv_s = "none" if conv is None else repr(conv)
        lines.append(f"run seed={seed} converged_at={conv_s} final_gain_error={dist!r}")
    text = "\n".join(lines)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep_summary.txt").write_text(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qlqr",
        description="Model-free adaptive LQR for a simulated cart-pole.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None,
                       help="configuration file (defaults to the shipped one)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the learner seed")
        p.add_argument("--out", type=Path, default=Path("runs"),
                       help="output directory (default: runs)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a single config value (repeatable)")

    p = sub.add_parser("exp1", help="learn the balancing gain from scratch")
    common(p)
    p.set_defaults(func=cmd_exp1)

    p = sub.add_parser("exp2", help="adapt to a mid-run pendulum fault")
    common(p)
    p.set_defaults(func=cmd_exp2)

    p = sub.add_parser("riccati", help="print the model-based solution")
    common(p)
    p.set_defaults(func=cmd_riccati)

    p = sub.add_parser("simulate", help="fixed-gain closed loop, no learning")
    common(p)
    p.add_argument("--gain", type=str, default=None,
                   help="explicit gain k1,k2,k3,k4 (default: model-based)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="repeat exp1 over consecutive seeds")
    common(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    return parser


def parse_and_dispatch(argv) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - unexpected
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    code = parse_and_dispatch(sys.argv[1:] if argv is None else argv)
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
