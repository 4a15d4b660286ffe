"""Experiment orchestration: disturbance generation, truth simulation,
estimator runs (proposed scheme plus an optional no-monitoring baseline),
CSV run records, and plot emission.

Randomness uses the counter-based Philox generator keyed by a 64-bit seed,
so identical configs produce bit-identical runs on any platform.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mhe import MheConfig, MovingHorizonEstimator
from .model import SystemModel, simulate_truth
from .monitor import MonitorConfig
from .solver import SolveOptions
from .systems import MODELS, chua_model

__all__ = [
    "DisturbanceSpec",
    "ExperimentConfig",
    "RunRecord",
    "generate_disturbances",
    "run_experiment",
    "compare_runs",
    "emit_plots",
    "preset",
    "PRESETS",
]

FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class DisturbanceSpec:
    """Per-component disturbance description. Each component is one of
    ("zero",), ("uniform", bound), or ("square_waves", [(amp, period,
    phase), ...])."""

    components: tuple

    def __post_init__(self):
        for comp in self.components:
            kind = comp[0]
            if kind == "uniform":
                if comp[1] <= 0:
                    raise ValueError("uniform bound must be positive")
            elif kind == "square_waves":
                for amp, period, phase in comp[1]:
                    if period <= 0:
                        raise ValueError("square wave period must be positive")
            elif kind != "zero":
                raise ValueError(f"unknown disturbance kind {kind!r}")

    def as_jsonable(self):
        return [list(c) if c[0] != "square_waves" else
                [c[0], [list(w) for w in c[1]]] for c in self.components]


def _square_wave(t: np.ndarray, amp: float, period: float, phase: float) -> np.ndarray:
    return np.where(((t + phase) % period) < period / 2.0, amp, -amp)


def generate_disturbances(spec: DisturbanceSpec, t_sim: int, seed: int) -> np.ndarray:
    """Sequence of shape (t_sim, n_w). Uniform components are i.i.d. on
    [-bound, bound]; square-wave components are the superposition of their
    waves (deterministic)."""
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    t = np.arange(t_sim, dtype=float)
    cols = []
    for comp in spec.components:
        kind = comp[0]
        if kind == "zero":
            cols.append(np.zeros(t_sim))
        elif kind == "uniform":
            cols.append(rng.uniform(-comp[1], comp[1], size=t_sim))
        else:
            w = np.zeros(t_sim)
            for amp, period, phase in comp[1]:
                w = w + _square_wave(t, amp, period, phase)
            cols.append(w)
    return np.column_stack(cols)


@dataclass
class ExperimentConfig:
    model_name: str
    mhe: MheConfig
    monitor: Optional[MonitorConfig]
    disturbances: DisturbanceSpec
    t_sim: int
    x0: np.ndarray
    z0: np.ndarray
    x0_prior: np.ndarray
    z0_prior: np.ndarray
    seed: int = 0
    baseline: bool = True
    label: str = ""

    def __post_init__(self):
        if self.t_sim < 1:
            raise ValueError("t_sim must be >= 1")
        if self.model_name not in MODELS:
            raise ValueError(f"unknown model preset {self.model_name!r}")

    def resolved(self) -> dict:
        """Full configuration as a JSON-serializable dict (the header that
        makes a run reproducible)."""
        mon = self.monitor
        return {
            "label": self.label,
            "model": self.model_name,
            "seed": int(self.seed),
            "t_sim": int(self.t_sim),
            "baseline": bool(self.baseline),
            "x0": list(map(float, np.atleast_1d(self.x0))),
            "z0": list(map(float, np.atleast_1d(self.z0))),
            "x0_prior": list(map(float, np.atleast_1d(self.x0_prior))),
            "z0_prior": list(map(float, np.atleast_1d(self.z0_prior))),
            "disturbances": self.disturbances.as_jsonable(),
            "mhe": {
                "N": int(self.mhe.N),
                "eta": float(self.mhe.eta),
                "Q": np.asarray(self.mhe.Q).tolist(),
                "R": np.asarray(self.mhe.R).tolist(),
                "W_bar": np.asarray(self.mhe.W_bar).tolist(),
                "V_bar": np.asarray(self.mhe.V_bar).tolist(),
                "alpha": float(self.mhe.alpha),
                "freeze_z": bool(self.mhe.freeze_z),
                "penalty_weight": float(self.mhe.penalty_weight),
                "solver": {
                    "max_iter": self.mhe.solve_options.max_iter,
                    "grad_tol": self.mhe.solve_options.grad_tol,
                    "step_tol": self.mhe.solve_options.step_tol,
                    "lambda0": self.mhe.solve_options.lambda0,
                },
            },
            "monitor": None if mon is None else {
                "mu": float(mon.mu_mon),
                "Phi": mon.Phi.tolist(),
                "C": mon.C.tolist(),
                "alpha": float(mon.alpha),
            },
        }


@dataclass
class RunRecord:
    """Per-step results of one experiment plus the resolved config."""

    config: dict
    t: np.ndarray
    x_true: np.ndarray
    z_true: np.ndarray
    x_hat: np.ndarray
    z_hat: np.ndarray
    e_x: np.ndarray
    e_z: np.ndarray
    alpha: np.ndarray
    observable: np.ndarray
    iterations: np.ndarray
    x_hat_base: Optional[np.ndarray] = None
    z_hat_base: Optional[np.ndarray] = None
    aborted_at: Optional[int] = None

    @property
    def has_baseline(self) -> bool:
        return self.x_hat_base is not None

    def column_names(self) -> list[str]:
        n_x = self.x_true.shape[1]
        n_z = self.z_true.shape[1]
        names = (["t"]
                 + [f"x{i+1}" for i in range(n_x)] + [f"z{i+1}" for i in range(n_z)]
                 + [f"xhat{i+1}" for i in range(n_x)] + [f"zhat{i+1}" for i in range(n_z)])
        if self.has_baseline:
            names += [f"xhat_b{i+1}" for i in range(n_x)] + [f"zhat_b{i+1}" for i in range(n_z)]
        names += ["ex_norm", "ez_norm", "alpha", "observable", "iterations"]
        return names

    def as_matrix(self) -> np.ndarray:
        cols = [self.t[:, None], self.x_true, self.z_true, self.x_hat, self.z_hat]
        if self.has_baseline:
            cols += [self.x_hat_base, self.z_hat_base]
        cols += [self.e_x[:, None], self.e_z[:, None], self.alpha[:, None],
                 self.observable[:, None].astype(float), self.iterations[:, None].astype(float)]
        return np.hstack(cols)

    def save(self, csv_path: str):
        """Write the CSV record plus a `.meta.json` sidecar with the
        resolved config."""
        header = ",".join(self.column_names())
        np.savetxt(csv_path, self.as_matrix(), delimiter=",", header=header,
                   comments="", fmt=FLOAT_FMT)
        meta = {"config": self.config, "aborted_at": self.aborted_at}
        with open(_meta_path(csv_path), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, csv_path: str) -> "RunRecord":
        with open(_meta_path(csv_path)) as fh:
            meta = json.load(fh)
        config = meta["config"]
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        n_x = len(config["x0"])
        n_z = len(config["z0"])
        has_base = bool(config["baseline"])
        i = 0

        def take(n):
            nonlocal i
            block = data[:, i:i + n]
            i += n
            return block

        t = take(1)[:, 0]
        x_true, z_true = take(n_x), take(n_z)
        x_hat, z_hat = take(n_x), take(n_z)
        xb, zb = (take(n_x), take(n_z)) if has_base else (None, None)
        e_x, e_z, alpha = take(1)[:, 0], take(1)[:, 0], take(1)[:, 0]
        observable = take(1)[:, 0].astype(bool)
        iterations = take(1)[:, 0].astype(int)
        return cls(config=config, t=t, x_true=x_true, z_true=z_true, x_hat=x_hat,
                   z_hat=z_hat, e_x=e_x, e_z=e_z, alpha=alpha, observable=observable,
                   iterations=iterations, x_hat_base=xb, z_hat_base=zb,
                   aborted_at=meta.get("aborted_at"))


def _meta_path(csv_path: str) -> str:
    base, _ = os.path.splitext(csv_path)
    return base + ".meta.json"


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """Simulate the truth, drive the proposed estimator (and, when enabled,
    the no-monitoring baseline on identical data), and collect a record.

    On a solver failure the partial record is returned with `aborted_at`
    set to the failing step."""
    model = MODELS[cfg.model_name]()
    w_seq = generate_disturbances(cfg.disturbances, cfg.t_sim, cfg.seed)
    u_seq = np.zeros((cfg.t_sim, model.n_u))
    truth = simulate_truth(model, cfg.x0, cfg.z0, u_seq, w_seq)
    proposed = MovingHorizonEstimator(model, cfg.mhe, cfg.x0_prior, cfg.z0_prior,
                                      monitor_cfg=cfg.monitor)
    base = None
    if cfg.baseline:
        base = MovingHorizonEstimator(model, cfg.mhe, cfg.x0_prior, cfg.z0_prior,
                                      monitor_cfg=None, always_trust_prior=True)
    T = cfg.t_sim
    x_hat = np.empty((T + 1, model.n_x))
    z_hat = np.empty((T + 1, model.n_z))
    xb = np.empty((T + 1, model.n_x)) if base else None
    zb = np.empty((T + 1, model.n_z)) if base else None
    alpha = np.zeros(T + 1)
    obs = np.zeros(T + 1, dtype=bool)
    iters = np.zeros(T + 1, dtype=int)
    x_hat[0], z_hat[0] = proposed.x_hat, proposed.z_hat
    if base:
        xb[0], zb[0] = base.x_hat, base.z_hat
    aborted_at = None
    t_done = T
    for t in range(1, T + 1):
        try:
            rec = proposed.update(truth.u[t - 1], truth.y[t - 1])
            if base:
                rec_b = base.update(truth.u[t - 1], truth.y[t - 1])
        except RuntimeError:
            aborted_at = t
            t_done = t - 1
            break
        x_hat[t], z_hat[t] = rec.x_hat, rec.z_hat
        alpha[t], obs[t], iters[t] = rec.alpha_t, rec.observable, rec.iterations
        if base:
            xb[t], zb[t] = rec_b.x_hat, rec_b.z_hat
    n = t_done + 1
    e_x = np.linalg.norm(x_hat[:n] - truth.x[:n], axis=1)
    e_z = np.linalg.norm(z_hat[:n] - truth.z[:n], axis=1)
    return RunRecord(
        config=cfg.resolved(), t=np.arange(n, dtype=float),
        x_true=truth.x[:n].copy(), z_true=truth.z[:n].copy(),
        x_hat=x_hat[:n], z_hat=z_hat[:n], e_x=e_x, e_z=e_z,
        alpha=alpha[:n], observable=obs[:n], iterations=iters[:n],
        x_hat_base=xb[:n] if base else None, z_hat_base=zb[:n] if base else None,
        aborted_at=aborted_at,
    )


def compare_runs(record: RunRecord) -> dict:
    """Phase-wise comparison of the parameter error: proposed vs baseline,
    split by the observability flag."""
    if not record.has_baseline:
        raise ValueError("record has no baseline columns")
    ez_prop = record.e_z
    ez_base = np.linalg.norm(record.z_hat_base - record.z_true, axis=1)
    obs = record.observable
    out = {"n_steps": int(record.t.size),
           "n_observable": int(np.sum(obs)),
           "n_unobservable": int(np.sum(~obs))}
    for name, mask in (("observable", obs), ("unobservable", ~obs)):
        out[f"{name}_mean_ez_proposed"] = float(np.mean(ez_prop[mask])) if np.any(mask) else 0.0
        out[f"{name}_mean_ez_baseline"] = float(np.mean(ez_base[mask])) if np.any(mask) else 0.0
    out["overall_rms_ez_proposed"] = float(np.sqrt(np.mean(ez_prop ** 2)))
    out["overall_rms_ez_baseline"] = float(np.sqrt(np.mean(ez_base ** 2)))
    out["overall_mean_ez_proposed"] = float(np.mean(ez_prop))
    out["overall_mean_ez_baseline"] = float(np.mean(ez_base))
    return out


_PLOT_SCRIPT = """\
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

data = np.loadtxt("{data}", delimiter=",", skiprows=1)
{body}
plt.xlabel("t")
plt.legend()
plt.tight_layout()
plt.savefig("{out}", dpi=150)
"""


def emit_plots(record: RunRecord, out_dir: str) -> list[str]:
    """Write three data/plot-script pairs: error norms, parameter tracking,
    and the observability level with its threshold line. Deterministic
    output bytes for a given record."""
    os.makedirs(out_dir, exist_ok=True)
    mon = record.config.get("monitor") or {}
    alpha_thr = mon.get("alpha", 5e-4)
    written = []

    def emit(name: str, header: str, matrix: np.ndarray, body: str):
        data_path = os.path.join(out_dir, f"{name}.csv")
        np.savetxt(data_path, matrix, delimiter=",", header=header, comments="",
                   fmt=FLOAT_FMT)
        script = _PLOT_SCRIPT.format(data=f"{name}.csv", body=body, out=f"{name}.png")
        script_path = os.path.join(out_dir, f"plot_{name}.py")
        with open(script_path, "w") as fh:
            fh.write(script)
        written.extend([data_path, script_path])

    cols = [record.t, record.e_x, record.e_z]
    header = "t,ex_norm,ez_norm"
    body = ('plt.semilogy(data[:, 0], data[:, 1], "r", label="||e_x||")\n'
            'plt.semilogy(data[:, 0], data[:, 2], "b", label="||e_z||")')
    if record.has_baseline:
        ez_b = np.linalg.norm(record.z_hat_base - record.z_true, axis=1)
        cols.append(ez_b)
        header += ",ez_norm_baseline"
        body += '\nplt.semilogy(data[:, 0], data[:, 3], "c", label="||e_z|| baseline")'
    emit("errors", header, np.column_stack(cols), body)

    cols = [record.t, record.z_true[:, 0], record.z_hat[:, 0]]
    header = "t,z_true,z_hat"
    body = ('plt.plot(data[:, 0], data[:, 1], "r", label="z")\n'
            'plt.plot(data[:, 0], data[:, 2], "b", label="z estimate")')
    if record.has_baseline:
        cols.append(record.z_hat_base[:, 0])
        header += ",z_hat_baseline"
        body += '\nplt.plot(data[:, 0], data[:, 3], "c", label="z estimate baseline")'
    emit("parameter", header, np.column_stack(cols), body)

    header = "t,alpha"
    body = ('plt.semilogy(data[:, 0], np.maximum(data[:, 1], 1e-300), "b", label="alpha_t")\n'
            f'plt.axhline({alpha_thr!r}, color="r", label="alpha threshold")')
    emit("alpha", header, np.column_stack([record.t, record.alpha]), body)
    return written


def _chua_mhe(N: int, alpha: float, solver: SolveOptions | None = None) -> MheConfig:
    return MheConfig(
        N=N, eta=0.9,
        Q=1e7 * np.eye(4), R=np.array([[1e3]]),
        W_bar=np.eye(3), V_bar=np.array([[1.0]]),
        alpha=alpha, freeze_z=True,
        solve_options=solver or SolveOptions(max_iter=50),
    )


def _chua_disturbances() -> DisturbanceSpec:
    # w4's square-wave parameters reproduce the multi-phase drift pattern;
    # the amplitudes/periods are reproduction choices, config-exposed.
    return DisturbanceSpec(components=(
        ("uniform", 1e-3),
        ("uniform", 1e-3),
        ("uniform", 1e-3),
        ("square_waves", ((5e-5, 800.0, 0.0), (5e-5, 1900.0, 0.0))),
        ("uniform", 5e-2),
    ))


def _chua_monitor(alpha: float) -> MonitorConfig:
    return MonitorConfig.default(n_x=3, C=np.array([[1.0, 0.0, 0.0]]), alpha=alpha)


def _chua_experiment(N: int, t_sim: int, seed: int, label: str,
                     alpha: float) -> ExperimentConfig:
    return ExperimentConfig(
        model_name="chua",
        mhe=_chua_mhe(N, alpha),
        monitor=_chua_monitor(alpha),
        disturbances=_chua_disturbances(),
        t_sim=t_sim,
        x0=np.array([2.0, 0.0, -1.0]), z0=np.array([0.45]),
        x0_prior=np.array([-1.0, 0.1, 2.0]), z0_prior=np.array([0.6]),
        seed=seed, baseline=True, label=label,
    )


# the desk-scale monitor threshold is larger than the paper-scale one: a
# 50-step window carries ~4x less parameter signal, and the pilot sweep
# showed 5e-4 trips only after the estimate has already degraded
PRESETS = {
    "chua-desk": lambda: _chua_experiment(N=50, t_sim=1500, seed=42,
                                          label="chua-desk", alpha=1e-2),
    "chua-paper": lambda: _chua_experiment(N=200, t_sim=4000, seed=42,
                                           label="chua-paper", alpha=5e-4),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
