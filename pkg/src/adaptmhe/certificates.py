"""Detectability and observability certificates, verified by sampling.

Three certificate types are supported:

* a bounded-energy bounded-state certificate for the parameter dynamics
  (a function V sandwiched between weighted norms whose growth along g is
  bounded by the disturbance energy),
* an incremental Lyapunov detectability certificate for the state dynamics
  (quadratic W with a dissipation inequality), and
* the weight set defining observable trajectory pairs of a given length.

Certificates are user-supplied inputs; this module checks their defining
inequalities on random in-set samples and evaluates exact membership of
trajectory pairs in the observability set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import SystemModel, Trajectory

__all__ = [
    "ParamUbebsCertificate",
    "IossCertificate",
    "ObservabilityCertificate",
    "CertificateSet",
    "ViolationReport",
    "check_ubebs",
    "check_ioss",
    "membership_E",
]

MARGIN_TOL = 1e-9


def _check_spd(M: np.ndarray, name: str, semi: bool = False):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.allclose(M, M.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(M)
    if semi:
        if eig[0] < -1e-12:
            raise ValueError(f"{name} must be positive semidefinite")
    elif eig[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    return M


def wnorm(v: np.ndarray, M: np.ndarray) -> float:
    """Weighted Euclidean norm sqrt(v' M v)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return float(np.sqrt(max(v @ M @ v, 0.0)))


def wnorm2(v: np.ndarray, M: np.ndarray) -> float:
    """Squared weighted norm v' M v."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return float(v @ M @ v)


@dataclass(frozen=True)
class ParamUbebsCertificate:
    """Certificate for the parameter dynamics g: ||z-z~||_Vlow <= V(z,z~)
    <= ||z-z~||_Vhigh and V(g(z,u,w),g(z~,u,w~)) - V(z,z~) <= ||w-w~||_Qv."""

    V_low: np.ndarray
    V_high: np.ndarray
    Q_v: np.ndarray
    V_eval: Optional[Callable[[np.ndarray, np.ndarray], float]] = None

    def __post_init__(self):
        object.__setattr__(self, "V_low", _check_spd(self.V_low, "V_low"))
        object.__setattr__(self, "V_high", _check_spd(self.V_high, "V_high"))
        object.__setattr__(self, "Q_v", _check_spd(self.Q_v, "Q_v", semi=True))

    def V(self, z, z_tilde) -> float:
        if self.V_eval is not None:
            return float(self.V_eval(np.atleast_1d(z), np.atleast_1d(z_tilde)))
        d = np.atleast_1d(z) - np.atleast_1d(z_tilde)
        return wnorm(d, self.V_high)

    @classmethod
    def for_additive_drift(cls, B_z: np.ndarray, n_z: int) -> "ParamUbebsCertificate":
        """Constructor for g(z,u,w) = z + B_z w: V is the plain Euclidean
        norm and Q_v = B_z' B_z (the dissipation holds with equality by the
        triangle inequality)."""
        B_z = np.atleast_2d(np.asarray(B_z, dtype=float))
        I = np.eye(n_z)
        return cls(V_low=I, V_high=I, Q_v=B_z.T @ B_z)


@dataclass(frozen=True)
class IossCertificate:
    """Quadratic incremental detectability certificate W(x,x~)=||x-x~||^2_Pw
    with sandwich matrices W_low/W_high, dissipation weights S_w, Q_w, R_w
    and decay rate eta_w in [0,1)."""

    P_w: np.ndarray
    W_low: np.ndarray
    W_high: np.ndarray
    S_w: np.ndarray
    Q_w: np.ndarray
    R_w: np.ndarray
    eta_w: float

    def __post_init__(self):
        for nm in ("P_w", "W_low", "W_high", "S_w", "Q_w", "R_w"):
            object.__setattr__(self, nm, _check_spd(getattr(self, nm), nm))
        if not 0.0 <= self.eta_w < 1.0:
            raise ValueError("eta_w must lie in [0, 1)")

    def W(self, x, x_tilde) -> float:
        d = np.atleast_1d(x) - np.atleast_1d(x_tilde)
        return wnorm2(d, self.P_w)


@dataclass(frozen=True)
class ObservabilityCertificate:
    """Weights (S_o, P_o, Q_o, R_o, eta_o) parameterizing the set of
    observable trajectory pairs of a given length."""

    S_o: np.ndarray
    P_o: np.ndarray
    Q_o: np.ndarray
    R_o: np.ndarray
    eta_o: float

    def __post_init__(self):
        for nm in ("S_o", "P_o", "Q_o", "R_o"):
            object.__setattr__(self, nm, _check_spd(getattr(self, nm), nm))
        if not 0.0 <= self.eta_o < 1.0:
            raise ValueError("eta_o must lie in [0, 1)")


@dataclass(frozen=True)
class CertificateSet:
    ubebs: ParamUbebsCertificate
    ioss: IossCertificate
    obs: ObservabilityCertificate


@dataclass
class ViolationReport:
    """Result of a sampled inequality check. A margin is RHS - LHS; samples
    with margin below -MARGIN_TOL count as violations."""

    n_samples: int
    n_violations: int
    worst_margin: float
    label: str = ""

    @property
    def ok(self) -> bool:
        return self.n_violations == 0

    def as_text(self) -> str:
        status = "ok" if self.ok else "VIOLATED"
        return (f"{self.label}: {status} ({self.n_violations}/{self.n_samples} violations, "
                f"worst margin {self.worst_margin:.3e})")

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "n_samples": self.n_samples,
            "n_violations": self.n_violations,
            "worst_margin": self.worst_margin,
            "ok": self.ok,
        }


def _sample_pair(model: SystemModel, rng: np.random.Generator):
    c = model.constraints
    x, xt = c.x.sample(rng), c.x.sample(rng)
    z, zt = c.z.sample(rng), c.z.sample(rng)
    u = c.u.sample(rng)
    w, wt = c.w.sample(rng), c.w.sample(rng)
    return x, xt, z, zt, u, w, wt


def check_ubebs(cert: ParamUbebsCertificate, model: SystemModel,
                n_samples: int = 200, rng_seed: int = 0) -> ViolationReport:
    """Sample the sandwich and dissipation inequalities of the parameter
    certificate at random in-set point pairs (report-only)."""
    rng = np.random.default_rng(rng_seed)
    worst = np.inf
    n_viol = 0
    for _ in range(n_samples):
        _, _, z, zt, u, w, wt = _sample_pair(model, rng)
        dz = z - zt
        V = cert.V(z, zt)
        m_lo = V - wnorm(dz, cert.V_low)
        m_hi = wnorm(dz, cert.V_high) - V
        gz = np.atleast_1d(model.g(z, u, w))
        gzt = np.atleast_1d(model.g(zt, u, wt))
        m_dis = wnorm(w - wt, cert.Q_v) - (cert.V(gz, gzt) - V)
        m = min(m_lo, m_hi, m_dis)
        worst = min(worst, m)
        if m < -MARGIN_TOL:
            n_viol += 1
    return ViolationReport(n_samples, n_viol, worst, label="ubebs")


def check_ioss(cert: IossCertificate, model: SystemModel,
               n_samples: int = 200, rng_seed: int = 0) -> ViolationReport:
    """Sample the sandwich and dissipation inequalities of the detectability
    certificate at random in-set point pairs (report-only)."""
    rng = np.random.default_rng(rng_seed)
    worst = np.inf
    n_viol = 0
    for _ in range(n_samples):
        x, xt, z, zt, u, w, wt = _sample_pair(model, rng)
        dx = x - xt
        W = cert.W(x, xt)
        m_lo = W - wnorm2(dx, cert.W_low)
        m_hi = wnorm2(dx, cert.W_high) - W
        fx = np.atleast_1d(model.f(x, z, u, w))
        fxt = np.atleast_1d(model.f(xt, zt, u, wt))
        dy = np.atleast_1d(model.h(x, z, u, w)) - np.atleast_1d(model.h(xt, zt, u, wt))
        rhs = (cert.eta_w * W + wnorm2(z - zt, cert.S_w)
               + wnorm2(w - wt, cert.Q_w) + wnorm2(dy, cert.R_w))
        m_dis = rhs - cert.W(fx, fxt)
        m = min(m_lo, m_hi, m_dis)
        worst = min(worst, m)
        if m < -MARGIN_TOL:
            n_viol += 1
    return ViolationReport(n_samples, n_viol, worst, label="ioss")


def membership_E(cert: ObservabilityCertificate, pair: tuple[Trajectory, Trajectory]) -> bool:
    """Exact membership of a trajectory pair in the observability set of
    length T: the initial parameter difference (S_o-weighted, squared) must
    be bounded by the discounted initial state difference plus disturbance
    and output difference energies."""
    a, b = pair
    if a.length != b.length:
        raise ValueError("trajectory pair must have equal lengths")
    if a.u.shape == b.u.shape and not np.array_equal(a.u, b.u):
        raise ValueError("trajectory pair must share the input sequence")
    T = a.length
    lhs = wnorm2(a.z[0] - b.z[0], cert.S_o)
    rhs = cert.eta_o ** T * wnorm2(a.x[0] - b.x[0], cert.P_o)
    for j in range(T):
        rhs += wnorm2(a.w[j] - b.w[j], cert.Q_o)
        rhs += wnorm2(a.y[j] - b.y[j], cert.R_o)
    return lhs <= rhs + MARGIN_TOL
