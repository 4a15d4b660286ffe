"""Built-in system models: the Chua-circuit benchmark, a certified scalar
toy system with analytically derived certificates, and a generic linear
builder used for solver cross-checks."""

from __future__ import annotations

import numpy as np

from .certificates import (
    CertificateSet,
    IossCertificate,
    ObservabilityCertificate,
    ParamUbebsCertificate,
)
from .model import Box, ConstraintSets, Jacobians, SystemModel

__all__ = ["chua_model", "toy_model", "toy_certificates", "linear_model", "MODELS"]

# Euler-discretized modified Chua circuit with a drifting cubic coefficient.
CHUA_B1 = 12.8
CHUA_B2 = 19.1
CHUA_A1 = 0.6
CHUA_A2 = -1.1
CHUA_DT = 0.01


def chua_model() -> SystemModel:
    """Chua benchmark: three states, one drifting parameter z multiplying
    x1^3, scalar output y = x1 + w5. Disturbances w1..w4 are process noise
    (w4 drives the parameter), w5 is measurement noise."""
    td, b1, b2, a1, a2 = CHUA_DT, CHUA_B1, CHUA_B2, CHUA_A1, CHUA_A2

    def f(x, z, u, w):
        x1, x2, x3 = x
        return np.array([
            x1 + td * b1 * (x2 - a1 * x1 - a2 * x1 ** 2 - z[0] * x1 ** 3) + w[0],
            x2 + td * (x1 - x2 + x3) + w[1],
            x3 - td * b2 * x2 + w[2],
        ])

    def g(z, u, w):
        return np.array([z[0] + w[3]])

    def h(x, z, u, w):
        return np.array([x[0] + w[4]])

    def f_x(x, z, u, w):
        x1 = x[0]
        return np.array([
            [1.0 + td * b1 * (-a1 - 2.0 * a2 * x1 - 3.0 * z[0] * x1 ** 2), td * b1, 0.0],
            [td, 1.0 - td, td],
            [0.0, -td * b2, 1.0],
        ])

    def f_z(x, z, u, w):
        return np.array([[-td * b1 * x[0] ** 3], [0.0], [0.0]])

    def f_w(x, z, u, w):
        J = np.zeros((3, 5))
        J[0, 0] = J[1, 1] = J[2, 2] = 1.0
        return J

    def g_z(z, u, w):
        return np.array([[1.0]])

    def g_w(z, u, w):
        return np.array([[0.0, 0.0, 0.0, 1.0, 0.0]])

    def h_x(x, z, u, w):
        return np.array([[1.0, 0.0, 0.0]])

    def h_z(x, z, u, w):
        return np.array([[0.0]])

    def h_w(x, z, u, w):
        return np.array([[0.0, 0.0, 0.0, 0.0, 1.0]])

    cons = ConstraintSets(
        x=Box(np.array([-1.0, -1.0, -3.0]), np.array([3.0, 1.0, 3.0])),
        z=Box(np.array([0.2]), np.array([0.8])),
        u=Box.unbounded(0),
        w=Box(np.array([-1e-3, -1e-3, -1e-3, -1e-4, -5e-2]),
              np.array([1e-3, 1e-3, 1e-3, 1e-4, 5e-2])),
    )
    return SystemModel(
        n_x=3, n_z=1, n_u=0, n_w_proc=4, n_w_meas=1, n_y=1,
        f=f, g=g, h=h, constraints=cons,
        jacobians=Jacobians(f_x=f_x, f_z=f_z, f_w=f_w, g_z=g_z, g_w=g_w,
                            h_x=h_x, h_z=h_z, h_w=h_w),
        name="chua",
    )


# Certified scalar toy system:
#   x+ = a x + w1,  z+ = z + w2,  y = x + b z + w3
# with |a| < 1 and b != 0. Its certificates below hold globally and exactly:
#   - parameter side: V = |z - z~|, Q_v = B_z' B_z with B_z = [0, 1, 0];
#   - state side: p (a e + d1)^2 <= (1+eps) a^2 p e^2 + p (1+1/eps) d1^2
#     (Young's inequality), so eta_w = (1+eps) a^2 with p = 1, eps = 1.
TOY_A = 0.3
TOY_B = 1.0
TOY_ETA_W = 2.0 * TOY_A ** 2  # 0.18
TOY_ETA_O = 0.3


def toy_model(a: float = TOY_A, b: float = TOY_B) -> SystemModel:
    if not abs(a) < 1.0:
        raise ValueError("toy model requires |a| < 1")
    if b == 0.0:
        raise ValueError("toy model requires b != 0")

    def f(x, z, u, w):
        return np.array([a * x[0] + w[0]])

    def g(z, u, w):
        return np.array([z[0] + w[1]])

    def h(x, z, u, w):
        return np.array([x[0] + b * z[0] + w[2]])

    jac = Jacobians(
        f_x=lambda x, z, u, w: np.array([[a]]),
        f_z=lambda x, z, u, w: np.array([[0.0]]),
        f_w=lambda x, z, u, w: np.array([[1.0, 0.0, 0.0]]),
        g_z=lambda z, u, w: np.array([[1.0]]),
        g_w=lambda z, u, w: np.array([[0.0, 1.0, 0.0]]),
        h_x=lambda x, z, u, w: np.array([[1.0]]),
        h_z=lambda x, z, u, w: np.array([[b]]),
        h_w=lambda x, z, u, w: np.array([[0.0, 0.0, 1.0]]),
    )
    cons = ConstraintSets.unbounded(1, 1, 0, 3)
    return SystemModel(n_x=1, n_z=1, n_u=0, n_w_proc=2, n_w_meas=1, n_y=1,
                       f=f, g=g, h=h, constraints=cons, jacobians=jac, name="toy")


def toy_certificates(a: float = TOY_A, b: float = TOY_B) -> CertificateSet:
    """Certificates for the toy system, valid globally by construction."""
    eta_w = 2.0 * a ** 2
    ubebs = ParamUbebsCertificate.for_additive_drift(np.array([[0.0, 1.0, 0.0]]), n_z=1)
    ioss = IossCertificate(
        P_w=np.array([[1.0]]),
        W_low=np.array([[1.0]]),
        W_high=np.array([[1.0]]),
        S_w=np.array([[1e-2]]),
        Q_w=2.0 * np.eye(3),
        R_w=np.array([[1.0]]),
        eta_w=eta_w,
    )
    obs = ObservabilityCertificate(
        S_o=np.array([[1.0]]),
        P_o=np.array([[1.0]]),
        Q_o=100.0 * np.eye(3),
        R_o=np.array([[10.0 / b ** 2]]),
        eta_o=TOY_ETA_O,
    )
    return CertificateSet(ubebs=ubebs, ioss=ioss, obs=obs)


def linear_model(A, G, E, C, D, B_w, H_w, M_w, constraints: ConstraintSets | None = None,
                 name: str = "linear") -> SystemModel:
    """Generic linear system

        x+ = A x + G z + B_w w_p,   z+ = E z + H_w w_p,
        y  = C x + D z + M_w w_m,

    where w_p / w_m are the process / measurement parts of w."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    B_w = np.atleast_2d(np.asarray(B_w, dtype=float))
    H_w = np.atleast_2d(np.asarray(H_w, dtype=float))
    M_w = np.atleast_2d(np.asarray(M_w, dtype=float))
    n_x, n_z = A.shape[0], E.shape[0]
    n_wp, n_wm = B_w.shape[1], M_w.shape[1]
    n_y = C.shape[0]

    def f(x, z, u, w):
        return A @ x + G @ z + B_w @ w[:n_wp]

    def g(z, u, w):
        return E @ z + H_w @ w[:n_wp]

    def h(x, z, u, w):
        return C @ x + D @ z + M_w @ w[n_wp:]

    def pad_p(Mat):
        out = np.zeros((Mat.shape[0], n_wp + n_wm))
        out[:, :n_wp] = Mat
        return out

    def pad_m(Mat):
        out = np.zeros((Mat.shape[0], n_wp + n_wm))
        out[:, n_wp:] = Mat
        return out

    jac = Jacobians(
        f_x=lambda x, z, u, w: A,
        f_z=lambda x, z, u, w: G,
        f_w=lambda x, z, u, w: pad_p(B_w),
        g_z=lambda z, u, w: E,
        g_w=lambda z, u, w: pad_p(H_w),
        h_x=lambda x, z, u, w: C,
        h_z=lambda x, z, u, w: D,
        h_w=lambda x, z, u, w: pad_m(M_w),
    )
    if constraints is None:
        constraints = ConstraintSets.unbounded(n_x, n_z, 0, n_wp + n_wm)
    return SystemModel(n_x=n_x, n_z=n_z, n_u=0, n_w_proc=n_wp, n_w_meas=n_wm, n_y=n_y,
                       f=f, g=g, h=h, constraints=constraints, jacobians=jac, name=name)


MODELS = {
    "chua": chua_model,
    "toy": toy_model,
}
