"""Moving horizon estimator with observability-adaptive prior updates.

At each time t the estimator solves a box-constrained nonlinear least
squares problem over the last Nt = min(t, N) steps, parameterized by the
window-initial state, window-initial parameter, and the process-disturbance
sequence (single shooting: intermediate states are recovered by rollout).
The cost is

    2 gamma(Nt) ||x0 - x_bar||^2_Wbar + 2 eta^Nt ||z0 - z_bar||^2_Vbar
      + sum_j ( 2 ||w_j||^2_Q + ||y_pred_j - y_j||^2_R )

Priors follow an adaptive rule: the state prior always trusts the latest
estimate, while the parameter prior trusts it only when the current window
is detected observable; otherwise the old prior is rolled forward through
the nominal (disturbance-free) parameter dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import Box, SystemModel
from .monitor import MonitorConfig, observability_gramian
from .solver import NlsProblem, SolveOptions, SolveResult, solve

__all__ = [
    "MheConfig",
    "WindowSolution",
    "EstimateRecord",
    "MovingHorizonEstimator",
    "assemble_cost",
    "solve_window",
    "nominal_param_rollout",
]


def _weight_sqrt(M: np.ndarray) -> np.ndarray:
    """Upper-triangular factor L with M = L'L, so ||v||^2_M = ||L v||^2."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return np.linalg.cholesky(M).T


def _check_pd(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.allclose(M, M.T, atol=1e-12) or np.linalg.eigvalsh(M)[0] <= 0:
        raise ValueError(f"{name} must be symmetric positive definite")
    return M


@dataclass
class MheConfig:
    N: int
    eta: float
    Q: np.ndarray  # weight on the process-disturbance block
    R: np.ndarray
    W_bar: np.ndarray
    V_bar: np.ndarray
    alpha: float = 5e-4
    gamma: Optional[Callable[[int], float]] = None  # defaults to eta**s
    freeze_z: bool = False
    penalty_weight: float = 1e6
    solve_options: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        self.Q = _check_pd(self.Q, "Q")
        self.R = _check_pd(self.R, "R")
        self.W_bar = _check_pd(self.W_bar, "W_bar")
        self.V_bar = _check_pd(self.V_bar, "V_bar")
        if self.gamma is None:
            eta = self.eta
            self.gamma = lambda s: eta ** s
        vals = [self.gamma(s) for s in range(self.N + 1)]
        if any(v <= 0 for v in vals) or any(b > a + 1e-12 for a, b in zip(vals, vals[1:])):
            raise ValueError("gamma must be positive and nonincreasing")


@dataclass
class WindowSolution:
    """Optimal window trajectory: x, z of length Nt+1; u, w (process part),
    y_pred of length Nt. States satisfy the dynamics by construction."""

    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    w: np.ndarray
    y_pred: np.ndarray
    objective: float
    iterations: int
    reason: str

    @property
    def length(self) -> int:
        return self.w.shape[0]


def _full_w(model: SystemModel, w_proc: np.ndarray) -> np.ndarray:
    return np.concatenate([w_proc, np.zeros(model.n_w_meas)])


def _rollout(model: SystemModel, x0, z0, u_seq, w_proc):
    m = w_proc.shape[0]
    xs = np.empty((m + 1, model.n_x))
    zs = np.empty((m + 1, model.n_z))
    ys = np.empty((m, model.n_y))
    xs[0], zs[0] = x0, z0
    for j in range(m):
        u_j = u_seq[j] if model.n_u else np.zeros(0)
        w = _full_w(model, w_proc[j])
        ys[j] = model.h(xs[j], zs[j], u_j, w)
        xs[j + 1] = model.f(xs[j], zs[j], u_j, w)
        zs[j + 1] = model.g(zs[j], u_j, w)
    return xs, zs, ys


def _rollout_sens(model: SystemModel, x0, z0, u_seq, w_proc):
    """Rollout plus sensitivities of states/outputs w.r.t. the decision
    vector d = (x0, z0, w_proc flattened)."""
    m = w_proc.shape[0]
    n_x, n_z, n_wp = model.n_x, model.n_z, model.n_w_proc
    n_d = n_x + n_z + m * n_wp
    xs = np.empty((m + 1, n_x))
    zs = np.empty((m + 1, n_z))
    ys = np.empty((m, model.n_y))
    Sx = np.zeros((m + 1, n_x, n_d))
    Sz = np.zeros((m + 1, n_z, n_d))
    Jy = np.zeros((m, model.n_y, n_d))
    xs[0], zs[0] = x0, z0
    Sx[0, :, :n_x] = np.eye(n_x)
    Sz[0, :, n_x:n_x + n_z] = np.eye(n_z)
    for j in range(m):
        u_j = u_seq[j] if model.n_u else np.zeros(0)
        w = _full_w(model, w_proc[j])
        c0 = n_x + n_z + j * n_wp
        cols = slice(c0, c0 + n_wp)
        ys[j] = model.h(xs[j], zs[j], u_j, w)
        Hx = model.jac_h_x(xs[j], zs[j], u_j, w)
        Hz = model.jac_h_z(xs[j], zs[j], u_j, w)
        Hw = model.jac_h_w(xs[j], zs[j], u_j, w)[:, :n_wp]
        Jy[j] = Hx @ Sx[j] + Hz @ Sz[j]
        Jy[j][:, cols] += Hw
        xs[j + 1] = model.f(xs[j], zs[j], u_j, w)
        zs[j + 1] = model.g(zs[j], u_j, w)
        Fx = model.jac_f_x(xs[j], zs[j], u_j, w)
        Fz = model.jac_f_z(xs[j], zs[j], u_j, w)
        Fw = model.jac_f_w(xs[j], zs[j], u_j, w)[:, :n_wp]
        Gz = model.jac_g_z(zs[j], u_j, w)
        Gw = model.jac_g_w(zs[j], u_j, w)[:, :n_wp]
        Sx[j + 1] = Fx @ Sx[j] + Fz @ Sz[j]
        Sx[j + 1][:, cols] += Fw
        Sz[j + 1] = Gz @ Sz[j]
        Sz[j + 1][:, cols] += Gw
    return xs, zs, ys, Sx, Sz, Jy


def assemble_cost(model: SystemModel, cfg: MheConfig, u_seq, y_seq,
                  x_bar, z_bar, x0, z0, w_proc) -> float:
    """Direct evaluation of the window cost at the given decision point."""
    w_proc = np.asarray(w_proc, dtype=float).reshape(-1, model.n_w_proc)
    m = w_proc.shape[0]
    y_seq = np.asarray(y_seq, dtype=float).reshape(m, model.n_y)
    xs, zs, ys = _rollout(model, np.asarray(x0, float), np.atleast_1d(np.asarray(z0, float)),
                          u_seq, w_proc)
    dx = np.asarray(x0, float) - np.asarray(x_bar, float)
    dz = np.atleast_1d(np.asarray(z0, float)) - np.atleast_1d(np.asarray(z_bar, float))
    cost = 2.0 * cfg.gamma(m) * float(dx @ cfg.W_bar @ dx)
    cost += 2.0 * cfg.eta ** m * float(dz @ cfg.V_bar @ dz)
    for j in range(m):
        cost += 2.0 * float(w_proc[j] @ cfg.Q @ w_proc[j])
        ry = ys[j] - y_seq[j]
        cost += float(ry @ cfg.R @ ry)
    return cost


def _window_problem(model: SystemModel, cfg: MheConfig, u_seq, y_seq, x_bar, z_bar):
    m = np.asarray(y_seq).reshape(-1, model.n_y).shape[0]
    n_x, n_z, n_wp = model.n_x, model.n_z, model.n_w_proc
    y_seq = np.asarray(y_seq, dtype=float).reshape(m, model.n_y)
    Lx = np.sqrt(2.0 * cfg.gamma(m)) * _weight_sqrt(cfg.W_bar)
    Lz = np.sqrt(2.0 * cfg.eta ** m) * _weight_sqrt(cfg.V_bar)
    Lw = np.sqrt(2.0) * _weight_sqrt(cfg.Q)
    Lr = _weight_sqrt(cfg.R)
    sp = np.sqrt(cfg.penalty_weight)
    xbox, zbox = model.constraints.x, model.constraints.z
    wbox_lo = model.constraints.w.lower[:n_wp]
    wbox_hi = model.constraints.w.upper[:n_wp]
    n_d = n_x + n_z + m * n_wp

    def unpack(d):
        x0 = d[:n_x]
        z0 = d[n_x:n_x + n_z]
        w = d[n_x + n_z:].reshape(m, n_wp)
        return x0, z0, w

    def residual(d):
        x0, z0, w = unpack(d)
        xs, zs, ys = _rollout(model, x0, z0, u_seq, w)
        parts = [Lx @ (x0 - x_bar), Lz @ (z0 - z_bar)]
        parts.append((w @ Lw.T).ravel())
        parts.append(((ys - y_seq) @ Lr.T).ravel())
        # path-constraint penalties on rolled-out interior/terminal states
        px = xs[1:] - np.clip(xs[1:], xbox.lower, xbox.upper)
        pz = zs[1:] - np.clip(zs[1:], zbox.lower, zbox.upper)
        parts.append(sp * px.ravel())
        parts.append(sp * pz.ravel())
        return np.concatenate(parts)

    def jacobian(d):
        x0, z0, w = unpack(d)
        xs, zs, ys, Sx, Sz, Jy = _rollout_sens(model, x0, z0, u_seq, w)
        rows = []
        Jpx = np.zeros((n_x, n_d))
        Jpx[:, :n_x] = Lx
        rows.append(Jpx)
        Jpz = np.zeros((n_z, n_d))
        Jpz[:, n_x:n_x + n_z] = Lz
        rows.append(Jpz)
        Jw = np.zeros((m * n_wp, n_d))
        for j in range(m):
            c0 = n_x + n_z + j * n_wp
            Jw[j * n_wp:(j + 1) * n_wp, c0:c0 + n_wp] = Lw
        rows.append(Jw)
        rows.append(np.concatenate([Lr @ Jy[j] for j in range(m)], axis=0))
        act_x = ((xs[1:] > xbox.upper) | (xs[1:] < xbox.lower)).astype(float)
        act_z = ((zs[1:] > zbox.upper) | (zs[1:] < zbox.lower)).astype(float)
        rows.append(sp * (act_x[:, :, None] * Sx[1:]).reshape(m * n_x, n_d))
        rows.append(sp * (act_z[:, :, None] * Sz[1:]).reshape(m * n_z, n_d))
        return np.vstack(rows)

    lower = np.concatenate([xbox.lower, zbox.lower, np.tile(wbox_lo, m)])
    upper = np.concatenate([xbox.upper, zbox.upper, np.tile(wbox_hi, m)])
    problem = NlsProblem(residual=residual, jacobian=jacobian, bounds=Box(lower, upper))
    return problem, unpack


def solve_window(model: SystemModel, cfg: MheConfig, u_seq, y_seq,
                 x_bar, z_bar, warm_start=None) -> WindowSolution:
    """Solve the window problem. The returned objective never exceeds the
    cost of the prior-seeded candidate (x_bar, z_bar, w = 0), nor that of
    the warm start: the better of the two seeds the descent."""
    y_arr = np.asarray(y_seq, dtype=float).reshape(-1, model.n_y)
    m = y_arr.shape[0]
    if m < 1:
        raise ValueError("window must contain at least one measurement")
    x_bar = np.asarray(x_bar, dtype=float)
    z_bar = np.atleast_1d(np.asarray(z_bar, dtype=float))
    problem, unpack = _window_problem(model, cfg, u_seq, y_arr, x_bar, z_bar)
    d_prior = problem.bounds.project(
        np.concatenate([x_bar, z_bar, np.zeros(m * model.n_w_proc)]))
    cands = [d_prior]
    if warm_start is not None:
        wx, wz, ww = warm_start
        d_warm = problem.bounds.project(
            np.concatenate([np.asarray(wx, float), np.atleast_1d(np.asarray(wz, float)),
                            np.asarray(ww, float).ravel()]))
        cands.append(d_warm)
    objs = [float(np.sum(problem.residual(d) ** 2)) for d in cands]
    d0 = cands[int(np.argmin(objs))]
    try:
        res = solve(problem, d0, cfg.solve_options)
    except (FloatingPointError, RuntimeError) as exc:
        raise RuntimeError(f"window solve failed ({m} steps): {exc}") from exc
    x0, z0, w = unpack(res.d_opt)
    xs, zs, ys = _rollout(model, x0, z0, u_seq, w)
    u_arr = (np.asarray(u_seq, dtype=float).reshape(m, model.n_u)
             if model.n_u else np.zeros((m, 0)))
    return WindowSolution(x=xs, z=zs, u=u_arr, w=w, y_pred=ys,
                          objective=res.objective, iterations=res.iterations,
                          reason=res.reason)


def nominal_param_rollout(model: SystemModel, z, u_seq, steps: int) -> np.ndarray:
    """Apply the parameter dynamics with zero disturbance for the given
    number of steps."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    w0 = np.zeros(model.n_w)
    for j in range(steps):
        u_j = u_seq[j] if model.n_u else np.zeros(0)
        z = np.atleast_1d(model.g(z, u_j, w0))
    return z


@dataclass
class EstimateRecord:
    t: int
    x_hat: np.ndarray
    z_hat: np.ndarray
    alpha_t: float
    observable: bool
    iterations: int
    objective: float


class MovingHorizonEstimator:
    """Drives the window problem over streaming (u, y) data.

    One instance is single-owner mutable: drive it from one logical thread.
    `observable_fn(t, solution) -> bool`, when given, replaces the monitor
    threshold as the observability signal (still gated by t >= N); this is
    how truth-aware audits plug in the exact membership test. With
    `always_trust_prior` the adaptive rule is disabled and the parameter
    prior always takes the newest estimate (the no-monitoring baseline).
    """

    def __init__(self, model: SystemModel, cfg: MheConfig, x0_prior, z0_prior,
                 monitor_cfg: MonitorConfig | None = None,
                 observable_fn: Optional[Callable[[int, WindowSolution], bool]] = None,
                 always_trust_prior: bool = False):
        self.model = model
        self.cfg = cfg
        self.monitor_cfg = monitor_cfg
        self.observable_fn = observable_fn
        self.always_trust_prior = always_trust_prior
        self.t = 0
        self.u_hist: list[np.ndarray] = []
        self.y_hist: list[np.ndarray] = []
        x0 = np.asarray(x0_prior, dtype=float)
        z0 = np.atleast_1d(np.asarray(z0_prior, dtype=float))
        self.xbar = {0: x0}
        self.zbar = {0: z0}
        self.x_hat = x0
        self.z_hat = z0
        self.alpha_t = 0.0
        self.observable = False
        self.last_solution: WindowSolution | None = None

    def initial_record(self) -> EstimateRecord:
        """Estimates at t=0 (no data yet): the priors themselves."""
        return EstimateRecord(0, self.x_hat.copy(), self.z_hat.copy(), 0.0, False, 0, 0.0)

    def update(self, u, y) -> EstimateRecord:
        """Consume the (input, measurement) pair of the step being completed
        and publish the estimates for the new time t."""
        model, cfg = self.model, self.cfg
        u = np.asarray(u, dtype=float).reshape(model.n_u) if model.n_u else np.zeros(0)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise ValueError("estimator inputs must be finite")
        self.u_hist.append(u)
        self.y_hist.append(y)
        t = self.t + 1
        Nt = min(t, cfg.N)
        s = t - Nt
        u_win = np.array(self.u_hist[s:t]) if model.n_u else np.zeros((Nt, 0))
        y_win = np.array(self.y_hist[s:t])
        x_bar, z_bar = self.xbar[s], self.zbar[s]
        warm = self._warm_start(Nt)
        sol = solve_window(model, cfg, u_win, y_win, x_bar, z_bar, warm)
        x_hat = sol.x[-1].copy()
        z_win = sol.z[-1].copy()
        if self.monitor_cfg is not None:
            self.alpha_t = observability_gramian(self.monitor_cfg, model, sol).alpha_t
        else:
            self.alpha_t = 0.0
        if self.observable_fn is not None:
            obs = t >= cfg.N and bool(self.observable_fn(t, sol))
        else:
            obs = t >= cfg.N and self.monitor_cfg is not None and self.alpha_t >= cfg.alpha
        # adaptive prior update
        self.xbar[t] = x_hat
        if self.always_trust_prior or obs:
            self.zbar[t] = z_win
        else:
            self.zbar[t] = nominal_param_rollout(model, self.zbar[s], u_win, Nt)
        # published parameter estimate (optionally frozen when unobservable)
        if cfg.freeze_z and not self.always_trust_prior and not obs:
            z_hat = nominal_param_rollout(model, self.z_hat, self.u_hist[t - 1:t], 1)
        else:
            z_hat = z_win
        for k in [k for k in self.xbar if k < t - cfg.N]:
            del self.xbar[k]
            del self.zbar[k]
        self.t = t
        self.x_hat = x_hat
        self.z_hat = z_hat
        self.observable = obs
        self.last_solution = sol
        return EstimateRecord(t, x_hat.copy(), z_hat.copy(), self.alpha_t, obs,
                              sol.iterations, sol.objective)

    def _warm_start(self, Nt: int):
        sol = self.last_solution
        if sol is None:
            return None
        n_wp = self.model.n_w_proc
        if Nt == sol.length + 1:  # growing phase: same window start, one more step
            return sol.x[0], sol.z[0], np.vstack([sol.w, np.zeros((1, n_wp))])
        # sliding phase: shift by one step
        return sol.x[1], sol.z[1], np.vstack([sol.w[1:], np.zeros((1, n_wp))])
