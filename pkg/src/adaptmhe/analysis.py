"""Stability-theory constants, contraction checks, horizon partitioning,
and numeric audits of the error bounds along simulated runs.

All constants are evaluated from the certificate matrices in closed form;
generalized eigenvalues lam_max(A, B) are the largest lambda solving
det(A - lambda B) = 0 with B positive definite. Audits compare both sides
of the boundedness inequalities on runs where the truth is known, using
the exact observability-set membership test (not the online monitor).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .certificates import CertificateSet, membership_E, wnorm, wnorm2
from .mhe import MheConfig, MovingHorizonEstimator, WindowSolution
from .model import SystemModel, Trajectory, simulate_truth
from .solver import SolveOptions

__all__ = [
    "generalized_eigmax",
    "TheoryConstants",
    "HorizonPartition",
    "compute_constants",
    "check_contraction",
    "min_horizon",
    "partition_horizons",
    "lyapunov_candidate",
    "gamma_from_certificates",
    "theory_mhe_config",
    "AuditRun",
    "run_certified",
    "audit_lemma1",
    "audit_lemma2",
    "audit_lemma3",
    "audit_theorem",
    "corrupt_ioss",
]

AUDIT_TOL = 1e-9


def generalized_eigmax(A: np.ndarray, B: np.ndarray) -> float:
    """Largest generalized eigenvalue of the symmetric pair (A, B), B > 0."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return float(scipy.linalg.eigh(A, B, eigvals_only=True)[-1])


@dataclass
class TheoryConstants:
    """Closed-form stability constants for a certificate set, discount eta,
    and horizon N. `contraction_ok` holds iff max(mu, rho) < 1."""

    eta: float
    N: int
    eta_w: float
    eta_o: float
    eta_tilde: float
    lam_Sw_Vlow: float
    lam_Po_Wbar: float
    lam_Wbar_Wlow: float
    lam_Vbar_Vlow: float
    lam_Vbar_So: float
    rho: float
    c: float
    mu: float
    C0: float
    C1: float
    C2: float
    cQ1: float
    cQ2: float
    q3_scale: float
    contraction_ok: bool

    def gamma(self, s: int) -> float:
        return self.eta_w ** s + self.lam_Po_Wbar * self.eta_o ** s

    def c1(self, r: float, s: int) -> float:
        factor = np.inf if self.eta_w == 0.0 else self.lam_Sw_Vlow / self.eta_w
        return max(r, factor) * (s + 1) * (1.0 - self.eta ** (s + 1)) / (1.0 - self.eta)


def compute_constants(certs: CertificateSet, eta: float, N: int) -> TheoryConstants:
    io, ub, ob = certs.ioss, certs.ubebs, certs.obs
    eta_tilde = max(io.eta_w, ob.eta_o)
    if not eta_tilde < eta < 1.0:
        raise ValueError(f"eta must lie in (max(eta_w, eta_o), 1) = ({eta_tilde}, 1)")
    if N < 1:
        raise ValueError("N must be >= 1")
    tc = TheoryConstants(
        eta=eta, N=N, eta_w=io.eta_w, eta_o=ob.eta_o, eta_tilde=eta_tilde,
        lam_Sw_Vlow=generalized_eigmax(io.S_w, ub.V_low),
        lam_Po_Wbar=generalized_eigmax(ob.P_o, io.W_high),
        lam_Wbar_Wlow=generalized_eigmax(io.W_high, io.W_low),
        lam_Vbar_Vlow=generalized_eigmax(ub.V_high, ub.V_low),
        lam_Vbar_So=generalized_eigmax(ub.V_high, ob.S_o),
        rho=np.nan, c=np.nan, mu=np.nan, C0=np.sqrt(2.0) / 2.0,
        C1=np.nan, C2=np.nan, cQ1=np.nan, cQ2=np.nan, q3_scale=np.nan,
        contraction_ok=False,
    )
    c1_1N = tc.c1(1.0, N)
    tc.rho = eta ** (-N) * c1_1N * (2.0 * io.eta_w ** N + 2.0 * tc.gamma(N)) * tc.lam_Wbar_Wlow
    if tc.rho < 1.0:
        tc.c = 8.0 * c1_1N * tc.lam_Vbar_Vlow / (1.0 - tc.rho) + 2.0
        tc.mu = (tc.c1(tc.c, N) * max(1.0, tc.lam_Vbar_So)
                 * max(4.0 * tc.lam_Wbar_Wlow * tc.gamma(N),
                       2.0 * tc.lam_Vbar_Vlow * eta ** N))
        tc.cQ1 = 4.0 * c1_1N * max(2.0 * tc.lam_Vbar_Vlow, eta ** (-N)) / (1.0 - tc.rho)
        tc.cQ2 = max(tc.mu * (4.0 * c1_1N * max(2.0 * tc.lam_Vbar_Vlow, eta ** (-N))
                              / (1.0 - tc.rho) + 2.0),
                     4.0 * tc.c1(tc.c, N) * max(1.0, tc.lam_Vbar_So))
        tc.q3_scale = max(tc.cQ1, tc.cQ2, 4.0 * c1_1N * eta ** (-N) + 2.0 * tc.c)
    else:
        tc.c = np.inf
        tc.mu = np.inf
        tc.cQ1 = tc.cQ2 = tc.q3_scale = np.inf
    tc.C1 = 2.0 * eta ** (-N) * c1_1N * (2.0 + tc.lam_Po_Wbar)
    tc.C2 = (4.0 * c1_1N + 2.0 * tc.c) * eta ** (-N)
    tc.contraction_ok = bool(max(tc.mu, tc.rho) < 1.0)
    return tc


def check_contraction(constants: TheoryConstants) -> bool:
    return bool(max(constants.mu, constants.rho) < 1.0)


def min_horizon(certs: CertificateSet, eta: float, cap: int = 100_000) -> Optional[int]:
    """Smallest N for which the contraction condition holds; None if the
    scan reaches the cap without success."""
    for N in range(1, cap + 1):
        if compute_constants(certs, eta, N).contraction_ok:
            return N
    return None


@dataclass(frozen=True)
class HorizonPartition:
    """Decomposition of [0, t] into N-aligned horizons: l is the remainder
    t mod N, T_t the aligned times with an observable window, k = |T_t|,
    and `times` the descending sequence t_1 > ... > t_k followed by
    t_{k+1} = l."""

    t: int
    N: int
    l: int
    T_t: tuple[int, ...]
    k: int
    times: tuple[int, ...]


def partition_horizons(observable_flags, t: int, N: int) -> HorizonPartition:
    """Flags are indexable by time tau (bool: the window solved at tau was
    observable). Only aligned times tau in [N, t] with (t - tau) % N == 0
    are considered."""
    l = t - (t // N) * N
    T_t = tuple(tau for tau in range(t, N - 1, -N) if observable_flags[tau])
    k = len(T_t)
    times = T_t + (l,)
    return HorizonPartition(t=t, N=N, l=l, T_t=T_t, k=k, times=times)


def lyapunov_candidate(certs: CertificateSet, c: float, x_hat, x, z_hat, z) -> float:
    """W(x_hat, x) + c V(z_hat, z)^2 with c >= 1."""
    if c < 1.0:
        raise ValueError("c must be >= 1")
    return certs.ioss.W(x_hat, x) + c * certs.ubebs.V(z_hat, z) ** 2


def gamma_from_certificates(certs: CertificateSet) -> Callable[[int], float]:
    """Discount gamma(s) = eta_w^s + lam(P_o, W_high) eta_o^s."""
    lam = generalized_eigmax(certs.obs.P_o, certs.ioss.W_high)
    eta_w, eta_o = certs.ioss.eta_w, certs.obs.eta_o
    return lambda s: eta_w ** s + lam * eta_o ** s


def full_Q(certs: CertificateSet) -> np.ndarray:
    return certs.ioss.Q_w + certs.ubebs.Q_v + certs.obs.Q_o


def theory_mhe_config(model: SystemModel, certs: CertificateSet, eta: float, N: int,
                      solve_options: SolveOptions | None = None) -> MheConfig:
    """Window-cost weights derived from the certificates: Q = Q_w + Q_v +
    Q_o (process block), R = R_w + R_o, priors weighted by the upper
    sandwich matrices."""
    Qf = full_Q(certs)
    n_p = model.n_w_proc
    return MheConfig(
        N=N, eta=eta,
        Q=Qf[:n_p, :n_p],
        R=certs.ioss.R_w + certs.obs.R_o,
        W_bar=certs.ioss.W_high,
        V_bar=certs.ubebs.V_high,
        gamma=gamma_from_certificates(certs),
        solve_options=solve_options or SolveOptions(),
    )


@dataclass
class AuditRun:
    """Everything the inequality audits need from one estimation run with
    known truth: published estimates, priors, exact observability flags."""

    model: SystemModel
    certs: CertificateSet
    cfg: MheConfig
    truth: Trajectory
    x_hat: np.ndarray  # (t_sim+1, n_x), index 0 = prior
    z_hat: np.ndarray
    x_bar: np.ndarray
    z_bar: np.ndarray
    flags: np.ndarray  # bool per time; exact membership and t >= N

    @property
    def t_sim(self) -> int:
        return self.truth.length


def _window_pair(run_model: SystemModel, sol: WindowSolution, truth: Trajectory,
                 t: int) -> tuple[Trajectory, Trajectory]:
    m = sol.length
    s = t - m
    w_est = np.hstack([sol.w, np.zeros((m, run_model.n_w_meas))])
    est = Trajectory(x=sol.x, z=sol.z, u=sol.u, w=w_est, y=sol.y_pred)
    tru = Trajectory(x=truth.x[s:t + 1], z=truth.z[s:t + 1], u=truth.u[s:t],
                     w=truth.w[s:t], y=truth.y[s:t])
    return est, tru


def run_certified(model: SystemModel, certs: CertificateSet, cfg: MheConfig,
                  x0, z0, x0_prior, z0_prior, w_seq) -> AuditRun:
    """Drive the estimator over a truth rollout, using the exact membership
    test as the observability signal (truth-aware; for validation runs)."""
    w_seq = np.asarray(w_seq, dtype=float).reshape(-1, model.n_w)
    t_sim = w_seq.shape[0]
    u_seq = np.zeros((t_sim, model.n_u))
    truth = simulate_truth(model, x0, z0, u_seq, w_seq)

    def exact_member(t: int, sol: WindowSolution) -> bool:
        return membership_E(certs.obs, _window_pair(model, sol, truth, t))

    est = MovingHorizonEstimator(model, cfg, x0_prior, z0_prior,
                                 observable_fn=exact_member)
    x_hat = np.empty((t_sim + 1, model.n_x))
    z_hat = np.empty((t_sim + 1, model.n_z))
    x_bar = np.empty((t_sim + 1, model.n_x))
    z_bar = np.empty((t_sim + 1, model.n_z))
    flags = np.zeros(t_sim + 1, dtype=bool)
    x_hat[0], z_hat[0] = est.x_hat, est.z_hat
    x_bar[0], z_bar[0] = est.xbar[0], est.zbar[0]
    for t in range(1, t_sim + 1):
        rec = est.update(truth.u[t - 1], truth.y[t - 1])
        x_hat[t], z_hat[t] = rec.x_hat, rec.z_hat
        x_bar[t], z_bar[t] = est.xbar[t], est.zbar[t]
        flags[t] = rec.observable
    return AuditRun(model=model, certs=certs, cfg=cfg, truth=truth,
                    x_hat=x_hat, z_hat=z_hat, x_bar=x_bar, z_bar=z_bar, flags=flags)


def _wsum_sq(run: AuditRun, lo: int, hi: int) -> float:
    """sum_{r=lo}^{hi-1} ||w_r||^2_Q with the full certificate weight."""
    Q = full_Q(run.certs)
    return float(sum(wnorm2(run.truth.w[r], Q) for r in range(lo, hi)))


def _wsum(run: AuditRun, lo: int, hi: int) -> float:
    """sum_{r=lo}^{hi-1} ||w_r||_Q (norms, not squared)."""
    Q = full_Q(run.certs)
    return float(sum(wnorm(run.truth.w[r], Q) for r in range(lo, hi)))


def _gamma_run(run: AuditRun, c: float, t: int, use_prior_z: bool = False) -> float:
    z = run.z_bar[t] if use_prior_z else run.z_hat[t]
    return lyapunov_candidate(run.certs, c, run.x_hat[t], run.truth.x[t], z, run.truth.z[t])


def audit_lemma1(run: AuditRun, constants: TheoryConstants, t: int) -> float:
    """Margin (RHS - LHS) of the non-observable error bound at time t.
    Applicable when t < N, or t >= N with an unobservable window."""
    N = constants.N
    if t >= N and run.flags[t]:
        raise ValueError(f"time {t} has an observable window; bound not applicable")
    Nt = min(t, N)
    s = t - Nt
    io, ub = run.certs.ioss, run.certs.ubebs
    dxb = run.x_bar[s] - run.truth.x[s]
    dzb = run.z_bar[s] - run.truth.z[s]
    rhs = constants.eta ** (-N) * constants.c1(1.0, Nt) * (
        (2.0 * io.eta_w ** Nt + 2.0 * constants.gamma(Nt)) * wnorm2(dxb, io.W_high)
        + 4.0 * constants.eta ** Nt * wnorm2(dzb, ub.V_high)
        + 4.0 * _wsum_sq(run, t - Nt, t)
    )
    lhs = _gamma_run(run, 1.0, t)
    return rhs - lhs


def audit_lemma2(run: AuditRun, constants: TheoryConstants, t: int) -> float:
    """Margin of the observable contraction bound at time t (requires an
    observable window at t >= N)."""
    N = constants.N
    if t < N or not run.flags[t]:
        raise ValueError(f"time {t} does not carry an observable window")
    lhs = _gamma_run(run, constants.c, t)
    prev = lyapunov_candidate(run.certs, 1.0, run.x_bar[t - N], run.truth.x[t - N],
                              run.z_bar[t - N], run.truth.z[t - N])
    rhs = (constants.mu * prev
           + 4.0 * constants.c1(constants.c, N) * max(1.0, constants.lam_Vbar_So)
           * _wsum_sq(run, t - N, t))
    return rhs - lhs


def audit_lemma3(run: AuditRun, constants: TheoryConstants, t: int) -> list[float]:
    """Margins of the interval bounds at time t: the boundedness inequality
    on [t_1, t] followed by one contraction inequality per observable
    horizon boundary."""
    part = partition_horizons(run.flags, t, constants.N)
    t1 = part.times[0]
    margins = []
    lhs1 = _gamma_run(run, 1.0, t)
    rhs1 = (lyapunov_candidate(run.certs, constants.c, run.x_hat[t1], run.truth.x[t1],
                               run.z_bar[t1], run.truth.z[t1])
            + constants.cQ1 * _wsum(run, t1, t) ** 2)
    margins.append(rhs1 - lhs1)
    for m in range(part.k):
        tm, tm1 = part.times[m], part.times[m + 1]
        lhs = _gamma_run(run, constants.c, tm)
        rhs = (constants.mu * lyapunov_candidate(
                   run.certs, constants.c, run.x_hat[tm1], run.truth.x[tm1],
                   run.z_bar[tm1], run.truth.z[tm1])
               + constants.cQ2 * _wsum(run, tm1, tm) ** 2)
        margins.append(rhs - lhs)
    return margins


def audit_theorem(run: AuditRun, constants: TheoryConstants, t: int) -> tuple[float, float, float]:
    """Evaluate the overall error bound at time t; returns (lhs, rhs,
    margin). Requires the contraction condition."""
    if not constants.contraction_ok:
        raise ValueError("contraction condition not satisfied; bound not claimed")
    io, ub = run.certs.ioss, run.certs.ubebs
    part = partition_horizons(run.flags, t, constants.N)
    k, l = part.k, part.l
    sq3 = np.sqrt(constants.q3_scale)
    lhs = constants.C0 * (wnorm(run.x_hat[t] - run.truth.x[t], io.W_low)
                          + wnorm(run.z_hat[t] - run.truth.z[t], ub.V_low))
    smu = np.sqrt(constants.mu)
    rhs = smu ** k * (np.sqrt(constants.C1) * np.sqrt(constants.eta_tilde) ** l
                      * wnorm(run.x_hat[0] - run.truth.x[0], io.W_high)
                      + np.sqrt(constants.C2) * np.sqrt(constants.eta) ** l
                      * wnorm(run.z_hat[0] - run.truth.z[0], ub.V_high))
    rhs += sq3 * _wsum(run, part.times[0], t)
    for m in range(k):
        rhs += smu ** m * sq3 * _wsum(run, part.times[m + 1], part.times[m])
    rhs += smu ** k * sq3 * _wsum(run, 0, l)
    return lhs, rhs, rhs - lhs


def corrupt_ioss(certs: CertificateSet, scale: float = 1e8) -> CertificateSet:
    """Return a deliberately invalid certificate set: the quadratic form of
    W is inflated without touching its sandwich matrices, so the sandwich
    inequality fails and run audits produce negative margins."""
    io = certs.ioss
    bad = type(io)(P_w=scale * io.P_w, W_low=io.W_low, W_high=io.W_high,
                   S_w=io.S_w, Q_w=io.Q_w, R_w=io.R_w, eta_w=io.eta_w)
    return CertificateSet(ubebs=certs.ubebs, ioss=bad, obs=certs.obs)
