import numpy as np
import pytest

from adaptmhe.model import Box
from adaptmhe.solver import (NlsProblem, SolveOptions, objective_decrease_certificate,
                             solve)


def _linear_problem(seed, m=12, n=4, box=None):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    prob = NlsProblem(residual=lambda d: A @ d - b,
                      bounds=box or Box.unbounded(n),
                      jacobian=lambda d: A)
    return prob, A, b


def test_unconstrained_linear_matches_lstsq():
    for seed in range(10):
        prob, A, b = _linear_problem(seed)
        res = solve(prob, np.zeros(4))
        d_star, *_ = np.linalg.lstsq(A, b, rcond=None)
        assert np.allclose(res.d_opt, d_star, atol=1e-8)
        assert res.reason == "converged"


def test_active_bound_solution_is_feasible_and_stationary():
    box = Box(np.full(4, -0.1), np.full(4, 0.1))
    prob, A, b = _linear_problem(3, box=box)
    res = solve(prob, np.zeros(4))
    assert box.contains(res.d_opt, tol=1e-14)
    # projected gradient small at the solution
    g = A.T @ (A @ res.d_opt - b)
    pg = res.d_opt - box.project(res.d_opt - g)
    assert np.max(np.abs(pg)) <= 1e-6


def test_rosenbrock_converges():
    def r(d):
        return np.array([10.0 * (d[1] - d[0] ** 2), 1.0 - d[0]])
    prob = NlsProblem(residual=r, bounds=Box.unbounded(2))
    res = solve(prob, np.array([-1.2, 1.0]), SolveOptions(max_iter=200))
    assert np.allclose(res.d_opt, [1.0, 1.0], atol=1e-6)


def test_objective_never_increases():
    prob, A, b = _linear_problem(7, box=Box(np.full(4, -0.05), np.full(4, 0.05)))
    d0 = np.full(4, 0.05)
    res = solve(prob, d0)
    assert objective_decrease_certificate(prob, d0, res)


def test_iterates_stay_in_box():
    box = Box(np.array([0.0, 0.0]), np.array([2.0, 2.0]))
    seen = []

    def r(d):
        seen.append(d.copy())
        return np.array([d[0] - 5.0, d[1] + 1.0, 0.1 * d[0] * d[1]])

    def jac(d):
        return np.array([[1.0, 0.0], [0.0, 1.0], [0.1 * d[1], 0.1 * d[0]]])

    res = solve(NlsProblem(residual=r, bounds=box, jacobian=jac), np.array([1.0, 1.0]))
    for d in seen:
        assert box.contains(d, tol=1e-14)
    assert box.contains(res.d_opt)


def test_fd_jacobian_fallback():
    prob = NlsProblem(residual=lambda d: np.array([d[0] ** 2 - 2.0]),
                      bounds=Box.unbounded(1))
    res = solve(prob, np.array([1.0]))
    assert res.d_opt[0] == pytest.approx(np.sqrt(2.0), abs=1e-6)


def test_nonfinite_jacobian_raises():
    prob = NlsProblem(residual=lambda d: np.array([d[0]]),
                      bounds=Box.unbounded(1),
                      jacobian=lambda d: np.array([[np.nan]]))
    with pytest.raises(FloatingPointError):
        solve(prob, np.array([1.0]))


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(max_iter=0)
    with pytest.raises(ValueError):
        SolveOptions(grad_tol=-1.0)
