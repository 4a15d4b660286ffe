"""Structured-text (YAML) experiment configuration.

A config file either describes an experiment from scratch or names a
`preset` and overrides parts of it. All matrices are row-major nested
lists; square matrices additionally accept the shorthand
"scaled_identity:<factor>". Schema (all sections optional when a preset
is given):

    preset: chua-desk            # optional base config
    label: my-run
    model: chua                  # built-in model name
    seed: 42
    t_sim: 1500
    baseline: true               # also run the no-monitoring baseline
    x0: [2.0, 0.0, -1.0]
    z0: [0.45]
    x0_prior: [-1.0, 0.1, 2.0]
    z0_prior: [0.6]
    mhe:
      N: 50
      eta: 0.9
      Q: "scaled_identity:1e7"   # process-disturbance weight
      R: [[1000.0]]
      W_bar: "scaled_identity:1"
      V_bar: [[1.0]]
      alpha: 5.0e-4
      freeze_z: true
      penalty_weight: 1.0e6
    solver:
      max_iter: 50
      grad_tol: 1.0e-8
      lambda0: 1.0e-3
    monitor:                     # null disables monitoring
      mu: 0.95
      Phi: "scaled_identity:0.5"
      C: [[1.0, 0.0, 0.0]]
      alpha: 5.0e-4
    disturbances:                # one entry per disturbance component
      - [uniform, 1.0e-3]
      - [uniform, 1.0e-3]
      - [uniform, 1.0e-3]
      - [square_waves, [[5.0e-5, 800, 0], [5.0e-5, 1900, 0]]]
      - [uniform, 5.0e-2]
"""

from __future__ import annotations

import copy

import numpy as np
import yaml

from .harness import DisturbanceSpec, ExperimentConfig, preset
from .mhe import MheConfig
from .monitor import MonitorConfig
from .solver import SolveOptions
from .systems import MODELS

__all__ = ["load_config", "parse_matrix", "experiment_from_dict", "load_experiment"]


def parse_matrix(value, size: int | None = None) -> np.ndarray:
    """Row-major nested list, scalar (1x1), or "scaled_identity:<factor>"
    (needs `size`)."""
    if isinstance(value, str):
        tag, _, factor = value.partition(":")
        if tag != "scaled_identity" or not factor:
            raise ValueError(f"unrecognized matrix literal {value!r}")
        if size is None:
            raise ValueError("scaled_identity needs a known matrix size here")
        return float(factor) * np.eye(size)
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    return arr


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"config {path} must be a mapping")
    return cfg


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def experiment_from_dict(cfg: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a plain config mapping. When a
    `preset` key is present, remaining keys override the preset."""
    cfg = dict(cfg)
    base_name = cfg.pop("preset", None)
    if base_name is not None:
        base = preset(base_name).resolved()
        # top-level `solver` overrides nest under mhe.solver
        solver_over = cfg.pop("solver", None)
        if solver_over:
            cfg.setdefault("mhe", {})
            cfg["mhe"] = _merge(cfg["mhe"], {"solver": solver_over})
        cfg = _merge(base, cfg)
    else:
        solver_over = cfg.pop("solver", None)
        if solver_over:
            cfg.setdefault("mhe", {})["solver"] = _merge(
                cfg["mhe"].get("solver", {}), solver_over)

    model_name = cfg["model"]
    if model_name not in MODELS:
        raise ValueError(f"unknown model {model_name!r}; available: {sorted(MODELS)}")
    model = MODELS[model_name]()

    mcfg = cfg["mhe"]
    solver_keys = mcfg.get("solver", {}) or {}
    opts = SolveOptions(**{k: solver_keys[k] for k in
                           ("max_iter", "grad_tol", "step_tol", "lambda0",
                            "lambda_up", "lambda_down") if k in solver_keys})
    mhe = MheConfig(
        N=int(mcfg["N"]),
        eta=float(mcfg["eta"]),
        Q=parse_matrix(mcfg["Q"], model.n_w_proc),
        R=parse_matrix(mcfg["R"], model.n_y),
        W_bar=parse_matrix(mcfg["W_bar"], model.n_x),
        V_bar=parse_matrix(mcfg["V_bar"], model.n_z),
        alpha=float(mcfg.get("alpha", 5e-4)),
        freeze_z=bool(mcfg.get("freeze_z", False)),
        penalty_weight=float(mcfg.get("penalty_weight", 1e6)),
        solve_options=opts,
    )

    mon_cfg = cfg.get("monitor")
    monitor = None
    if mon_cfg is not None:
        monitor = MonitorConfig(
            mu_mon=float(mon_cfg["mu"]),
            Phi=parse_matrix(mon_cfg["Phi"], model.n_x),
            C=parse_matrix(mon_cfg["C"]),
            alpha=float(mon_cfg.get("alpha", mhe.alpha)),
        )

    dist = DisturbanceSpec(components=tuple(
        _parse_component(c) for c in cfg["disturbances"]))
    if len(dist.components) != model.n_w:
        raise ValueError(f"model expects {model.n_w} disturbance components, "
                         f"config has {len(dist.components)}")

    return ExperimentConfig(
        model_name=model_name,
        mhe=mhe,
        monitor=monitor,
        disturbances=dist,
        t_sim=int(cfg["t_sim"]),
        x0=np.asarray(cfg["x0"], dtype=float),
        z0=np.asarray(cfg["z0"], dtype=float),
        x0_prior=np.asarray(cfg["x0_prior"], dtype=float),
        z0_prior=np.asarray(cfg["z0_prior"], dtype=float),
        seed=int(cfg.get("seed", 0)),
        baseline=bool(cfg.get("baseline", True)),
        label=str(cfg.get("label", "")),
    )


def _parse_component(entry):
    kind = entry[0]
    if kind == "zero":
        return ("zero",)
    if kind == "uniform":
        return ("uniform", float(entry[1]))
    if kind == "square_waves":
        return ("square_waves", tuple((float(a), float(p), float(ph))
                                      for a, p, ph in entry[1]))
    raise ValueError(f"unknown disturbance kind {kind!r}")


def load_experiment(path: str) -> ExperimentConfig:
    return experiment_from_dict(load_config(path))
