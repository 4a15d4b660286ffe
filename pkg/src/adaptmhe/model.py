"""Nonlinear discrete-time system models with a state/parameter decomposition.

A model consists of state dynamics f, parameter dynamics g, and an output
map h:

    x[t+1] = f(x[t], z[t], u[t], w[t])
    z[t+1] = g(z[t], u[t], w[t])
    y[t]   = h(x[t], z[t], u[t], w[t])

The disturbance vector w is partitioned into a process part (the first
n_w_proc components, decision variables of the estimator) and a measurement
part (the trailing n_w_meas components, absorbed into the output residual).
Constraint sets are axis-aligned boxes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Box",
    "ConstraintSets",
    "Jacobians",
    "SystemModel",
    "Trajectory",
    "fd_jacobian",
    "project_box",
    "step",
    "output",
    "simulate_truth",
]


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], v: np.ndarray) -> np.ndarray:
    """Central finite-difference Jacobian with step 1e-6 * (1 + |v_i|)."""
    v = np.asarray(v, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(v), dtype=float))
    J = np.empty((f0.size, v.size))
    for i in range(v.size):
        h = 1e-6 * (1.0 + abs(v[i]))
        vp = v.copy()
        vm = v.copy()
        vp[i] += h
        vm[i] -= h
        J[:, i] = (np.atleast_1d(fun(vp)) - np.atleast_1d(fun(vm))) / (2.0 * h)
    return J


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, entries may be +-inf."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        up = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != up.shape:
            raise ValueError("box bounds must have equal shapes")
        if np.any(lo > up):
            raise ValueError("box requires lower <= upper elementwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def unbounded(cls, n: int) -> "Box":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)

    def contains(self, v: np.ndarray, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        """Uniform sample on bounded axes, centered normal on unbounded ones."""
        lo, up = self.lower, self.upper
        out = np.empty(self.dim)
        bounded = np.isfinite(lo) & np.isfinite(up)
        out[bounded] = rng.uniform(lo[bounded], up[bounded])
        free = ~bounded
        if np.any(free):
            out[free] = scale * rng.standard_normal(int(np.sum(free)))
            out[free] = np.clip(out[free], lo[free], up[free])
        return out


def project_box(box: Box, v: np.ndarray) -> np.ndarray:
    """Elementwise clamp of v onto the box (idempotent)."""
    return box.project(v)


@dataclass(frozen=True)
class ConstraintSets:
    """Boxes X, Z, U, W for states, parameters, inputs, disturbances."""

    x: Box
    z: Box
    u: Box
    w: Box

    @classmethod
    def unbounded(cls, n_x: int, n_z: int, n_u: int, n_w: int) -> "ConstraintSets":
        return cls(Box.unbounded(n_x), Box.unbounded(n_z), Box.unbounded(n_u), Box.unbounded(n_w))


@dataclass(frozen=True)
class Jacobians:
    """Analytic partial derivatives; any entry left as None falls back to
    finite differences. Signatures follow the corresponding map."""

    f_x: Optional[Callable] = None
    f_z: Optional[Callable] = None
    f_w: Optional[Callable] = None
    g_z: Optional[Callable] = None
    g_w: Optional[Callable] = None
    h_x: Optional[Callable] = None
    h_z: Optional[Callable] = None
    h_w: Optional[Callable] = None


@dataclass(frozen=True)
class SystemModel:
    n_x: int
    n_z: int
    n_u: int
    n_w_proc: int
    n_w_meas: int
    n_y: int
    f: Callable
    g: Callable
    h: Callable
    constraints: ConstraintSets
    jacobians: Jacobians = field(default_factory=Jacobians)
    name: str = ""

    @property
    def n_w(self) -> int:
        return self.n_w_proc + self.n_w_meas

    def _check_dims(self, x, z, u, w):
        if np.asarray(x).size != self.n_x:
            raise ValueError(f"state dimension mismatch: got {np.asarray(x).size}, expected {self.n_x}")
        if np.asarray(z).size != self.n_z:
            raise ValueError(f"parameter dimension mismatch: got {np.asarray(z).size}, expected {self.n_z}")
        if np.asarray(u).size != self.n_u:
            raise ValueError(f"input dimension mismatch: got {np.asarray(u).size}, expected {self.n_u}")
        if np.asarray(w).size != self.n_w:
            raise ValueError(f"disturbance dimension mismatch: got {np.asarray(w).size}, expected {self.n_w}")

    # --- Jacobian accessors (analytic or central finite differences) ---

    def jac_f_x(self, x, z, u, w):
        if self.jacobians.f_x is not None:
            return np.atleast_2d(np.asarray(self.jacobians.f_x(x, z, u, w), dtype=float))
        return fd_jacobian(lambda v: self.f(v, z, u, w), np.asarray(x, dtype=float))

    def jac_f_z(self, x, z, u, w):
        if self.jacobians.f_z is not None:
            return np.atleast_2d(np.asarray(self.jacobians.f_z(x, z, u, w), dtype=float))
        return fd_jacobian(lambda v: self.f(x, v, u, w), np.asarray(z, dtype=float))

    def jac_f_w(self, x, z, u, w):
        if self.jacobians.f_w is not None:
            return np.atleast_2d(np.asarray(self.jacobians.f_w(x, z, u, w), dtype=float))
        return fd_jacobian(lambda v: self.f(x, z, u, v), np.asarray(w, dtype=float))

    def jac_g_z(self, z, u, w):
        if self.jacobians.g_z is not None:
            return np.atleast_2d(np.asarray(self.jacobians.g_z(z, u, w), dtype=float))
        return fd_jacobian(lambda v: self.g(v, u, w), np.asarray(z, dtype=float))

    def jac_g_w(self, z, u, w):
        if self.jacobians.g_w is not None:
            return np.atleast_2d(np.asarray(self.jacobians.g_w(z, u, w), dtype=float))
        return fd_jacobian(lambda v: self.g(z, u, v), np.asarray(w, dtype=float))

    def jac_h_x(self, x, z, u, w):
        if self.jacobians.h_x is not None:
            return np.atleast_2d(np.asarray(self.jacobians.h_x(x, z, u, w), dtype=float))
        return fd_jacobian(lambda v: self.h(v, z, u, w), np.asarray(x, dtype=float))

    def jac_h_z(self, x, z, u, w):
        if self.jacobians.h_z is not None:
            return np.atleast_2d(np.asarray(self.jacobians.h_z(x, z, u, w), dtype=float))
        return fd_jacobian(lambda v: self.h(x, v, u, w), np.asarray(z, dtype=float))

    def jac_h_w(self, x, z, u, w):
        if self.jacobians.h_w is not None:
            return np.atleast_2d(np.asarray(self.jacobians.h_w(x, z, u, w), dtype=float))
        return fd_jacobian(lambda v: self.h(x, z, u, v), np.asarray(w, dtype=float))


def step(model: SystemModel, x, z, u, w):
    """One step of the dynamics: returns (f(x,z,u,w), g(z,u,w))."""
    model._check_dims(x, z, u, w)
    x_next = np.atleast_1d(np.asarray(model.f(x, z, u, w), dtype=float))
    z_next = np.atleast_1d(np.asarray(model.g(z, u, w), dtype=float))
    if x_next.size != model.n_x:
        raise ValueError(f"f returned dimension {x_next.size}, expected {model.n_x}")
    if z_next.size != model.n_z:
        raise ValueError(f"g returned dimension {z_next.size}, expected {model.n_z}")
    if not np.all(np.isfinite(x_next)):
        raise FloatingPointError("state dynamics f produced a non-finite value")
    if not np.all(np.isfinite(z_next)):
        raise FloatingPointError("parameter dynamics g produced a non-finite value")
    return x_next, z_next


def output(model: SystemModel, x, z, u, w):
    """Output map h(x,z,u,w)."""
    model._check_dims(x, z, u, w)
    y = np.atleast_1d(np.asarray(model.h(x, z, u, w), dtype=float))
    if y.size != model.n_y:
        raise ValueError(f"h returned dimension {y.size}, expected {model.n_y}")
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("output map h produced a non-finite value")
    return y


@dataclass(frozen=True)
class Trajectory:
    """A rollout of the model. States x, z have T+1 entries; u, w, y have T.

    Consecutive entries satisfy the dynamics exactly by construction when
    created through simulate_truth.
    """

    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    w: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        T = self.u.shape[0]
        if not (self.w.shape[0] == T and self.y.shape[0] == T):
            raise ValueError("u, w, y must have equal lengths")
        if not (self.x.shape[0] == T + 1 and self.z.shape[0] == T + 1):
            raise ValueError("x, z must have one more entry than u, w, y")

    @property
    def length(self) -> int:
        return self.u.shape[0]


def simulate_truth(model: SystemModel, x0, z0, u_seq, w_seq) -> Trajectory:
    """Roll the exact dynamics forward; constraint violations warn, they do
    not abort (the boxes describe an assumption on the truth)."""
    w_seq = np.asarray(w_seq, dtype=float).reshape(-1, model.n_w)
    T = w_seq.shape[0]
    if model.n_u == 0:
        u_seq = np.zeros((T, 0)) if u_seq is None or len(u_seq) in (0, T) else None
        if u_seq is None:
            raise ValueError("u_seq and w_seq must have equal lengths")
    else:
        u_seq = np.asarray(u_seq, dtype=float).reshape(-1, model.n_u)
        if u_seq.shape[0] != T:
            raise ValueError("u_seq and w_seq must have equal lengths")
    xs = np.empty((T + 1, model.n_x))
    zs = np.empty((T + 1, model.n_z))
    ys = np.empty((T, model.n_y))
    xs[0] = np.asarray(x0, dtype=float)
    zs[0] = np.atleast_1d(np.asarray(z0, dtype=float))
    n_viol = 0
    for t in range(T):
        u_t = u_seq[t] if model.n_u else np.zeros(0)
        if not (model.constraints.x.contains(xs[t]) and model.constraints.z.contains(zs[t])):
            n_viol += 1
        ys[t] = output(model, xs[t], zs[t], u_t, w_seq[t])
        try:
            xs[t + 1], zs[t + 1] = step(model, xs[t], zs[t], u_t, w_seq[t])
        except FloatingPointError as exc:
            raise FloatingPointError(f"non-finite state at step {t}: {exc}") from exc
    if n_viol:
        warnings.warn(f"truth trajectory left the constraint sets at {n_viol} of {T} steps", stacklevel=2)
    return Trajectory(x=xs, z=zs, u=u_seq, w=w_seq, y=ys)
