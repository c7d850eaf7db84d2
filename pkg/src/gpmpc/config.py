"""Run configuration: defaults, merging, validation and object construction."""
from __future__ import annotations

import copy
import json

import numpy as np

from .gp import SearchSpace
from .mpc import MPCConfig, U_BOUND
from .planner import PlannerConfig
from .sim import GroundTruthModel, ScenarioConfig, Sweep, default_field


class ConfigError(ValueError):
    pass


def _defaults() -> dict:
    gt = default_field(a0_true=5.0, amplitude=6.0, bias=(4.0, -3.0), brownian_sigma=0.1).to_dict()
    gt["seed"] = None
    return {
        "seed": 0,
        "output_dir": "out",
        "ground_truth": gt,
        "sweep": {"f_max": 40.0, "f_step": 1.0, "alpha_step_deg": 1.0, "dwell_steps": 3, "stride": 1, "dt": 0.1},
        "sysid": {"cutoff_hz": 2.0, "steady_only": True, "split_seed": None, "max_train": 2000, "hyper_points": 300},
        "gp": {"restarts": 8, "sweeps": 3, "line_evals": 20},
        "mpc": {
            "Q": [[1.0, 0.0], [0.0, 1.0]],
            "R": [[0.01, 0.0], [0.0, 0.01]],
            "horizon_T": 5,
            "dt": 0.03,
            "u_min": [-U_BOUND, -U_BOUND],
            "u_max": [U_BOUND, U_BOUND],
            "solver_tol": 1e-8,
            "max_iters": 20000,
        },
        "planner": {
            "max_iters": 3000,
            "steer_step": 5.0,
            "goal_radius": 2.0,
            "rewire_radius_const": 200.0,
            "goal_bias": 0.05,
            "seed": None,
        },
        "scenario": {
            "kind": "circle",
            "dt": 0.03,
            "radius": 50.0,
            "angular_speed": 0.2,
            "duration": 10.0,
            "f_nominal": 2.0,
        },
    }


DEFAULTS = _defaults()


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def resolve(user: dict | None = None) -> dict:
    """Merge ``user`` over the defaults and fill every seed that defaults to the global one."""
    cfg = _merge(DEFAULTS, user or {})
    seed = int(cfg["seed"])
    for section in ("ground_truth", "sysid", "planner"):
        key = "split_seed" if section == "sysid" else "seed"
        if cfg[section][key] is None:
            cfg[section][key] = seed
    if cfg["scenario"]["kind"] not in ("circle", "planner_path", "custom"):
        raise ConfigError(f"unknown scenario kind {cfg['scenario']['kind']!r}")
    # construct once so bad values fail here rather than mid-run
    try:
        ground_truth(cfg)
        sweep(cfg)
        mpc_config(cfg)
        planner_config(cfg)
        search_space(cfg, seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load(path) -> dict:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return resolve(user)


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2)


def ground_truth(cfg) -> GroundTruthModel:
    g = dict(cfg["ground_truth"])
    g["bias"] = np.asarray(g["bias"], dtype=float)
    g["harmonics"] = np.asarray(g["harmonics"], dtype=float)
    g["f_poly"] = np.asarray(g["f_poly"], dtype=float)
    return GroundTruthModel(**g)


def sweep(cfg) -> Sweep:
    s = {k: v for k, v in cfg["sweep"].items() if k != "dt"}
    if not cfg["sweep"]["dt"] > 0:
        raise ValueError("sweep.dt must be positive")
    return Sweep(**s)


def mpc_config(cfg) -> MPCConfig:
    m = cfg["mpc"]
    return MPCConfig(
        Q=np.asarray(m["Q"], dtype=float),
        R=np.asarray(m["R"], dtype=float),
        horizon_T=m["horizon_T"],
        dt=m["dt"],
        u_min=np.asarray(m["u_min"], dtype=float),
        u_max=np.asarray(m["u_max"], dtype=float),
        solver_tol=m["solver_tol"],
        max_iters=m["max_iters"],
    )


def planner_config(cfg) -> PlannerConfig:
    return PlannerConfig(**cfg["planner"])


def search_space(cfg, seed) -> dict:
    """Keyword arguments for ``SearchSpace.for_targets``."""
    g = cfg["gp"]
    kw = dict(restarts=int(g["restarts"]), sweeps=int(g["sweeps"]), line_evals=int(g["line_evals"]), seed=int(seed))
    if min(kw["restarts"], kw["sweeps"], kw["line_evals"]) < 1:
        raise ValueError("gp search settings must be positive")
    SearchSpace(**kw)
    return kw


def scenario(cfg, waypoints=None) -> ScenarioConfig:
    s = cfg["scenario"]
    return ScenarioConfig(
        kind=s["kind"] if waypoints is None else "planner_path",
        ground_truth=ground_truth(cfg),
        mpc=mpc_config(cfg),
        dt=s["dt"],
        radius=s["radius"],
        angular_speed=s["angular_speed"],
        duration=s["duration"],
        waypoints=waypoints,
    )
