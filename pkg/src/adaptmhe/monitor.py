"""Online observability monitoring of the estimated window.

A discounted Gramian is accumulated from the parameter-sensitivity
directions of the state dynamics along the estimated window:

    Y[0] = 0,   Y[j+1] = Phi Y[j] + df/dz(point j)
    O = sum_j mu^(Nt - j + 1) Y[j]' C' C Y[j]

and the excitation level is alpha_t = lambda_min(O). The window counts as
observable when alpha_t >= alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemModel

__all__ = ["MonitorConfig", "MonitorOutput", "observability_gramian", "is_observable"]


@dataclass(frozen=True)
class MonitorConfig:
    mu_mon: float
    Phi: np.ndarray
    C: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "Phi", np.atleast_2d(np.asarray(self.Phi, dtype=float)))
        object.__setattr__(self, "C", np.atleast_2d(np.asarray(self.C, dtype=float)))
        if not 0.0 < self.mu_mon < 1.0:
            raise ValueError("mu_mon must lie in (0, 1)")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.Phi.shape[0] != self.Phi.shape[1]:
            raise ValueError("Phi must be square")
        if np.max(np.abs(np.linalg.eigvals(self.Phi))) >= 1.0:
            raise ValueError("Phi must be Schur stable (spectral radius < 1)")

    @classmethod
    def default(cls, n_x: int, C: np.ndarray, alpha: float = 5e-4,
                mu_mon: float = 0.95, phi_scale: float = 0.5) -> "MonitorConfig":
        # mu_mon / Phi defaults are implementation choices, config-overridable
        return cls(mu_mon=mu_mon, Phi=phi_scale * np.eye(n_x), C=C, alpha=alpha)


@dataclass(frozen=True)
class MonitorOutput:
    O: np.ndarray
    alpha_t: float

    def observable(self, alpha: float) -> bool:
        return is_observable(self, alpha)


def observability_gramian(cfg: MonitorConfig, model: SystemModel, window) -> MonitorOutput:
    """Accumulate the discounted Gramian along a solved window.

    `window` must expose arrays x, z (length Nt+1), u, w_proc (length Nt)
    of the estimated window trajectory; df/dz is evaluated at the full
    estimated point (state, parameter, input, disturbance).
    """
    Nt = window.w.shape[0]
    n_x, n_z = model.n_x, model.n_z
    Y = np.zeros((n_x, n_z))
    O = np.zeros((n_z, n_z))
    CtC = cfg.C.T @ cfg.C
    for j in range(Nt):
        O += cfg.mu_mon ** (Nt - j + 1) * (Y.T @ CtC @ Y)
        u_j = window.u[j] if model.n_u else np.zeros(0)
        w_full = np.concatenate([window.w[j], np.zeros(model.n_w_meas)])
        dfdz = model.jac_f_z(window.x[j], window.z[j], u_j, w_full)
        if not np.all(np.isfinite(dfdz)):
            raise FloatingPointError(f"non-finite df/dz at window index {j}")
        Y = cfg.Phi @ Y + dfdz
    O = 0.5 * (O + O.T)
    if n_z == 1:
        alpha_t = float(O[0, 0])
    else:
        alpha_t = float(np.linalg.eigvalsh(O)[0])
    return MonitorOutput(O=O, alpha_t=alpha_t)


def is_observable(out: MonitorOutput, alpha: float) -> bool:
    """Threshold test, boundary inclusive."""
    return out.alpha_t >= alpha
