import numpy as np
import pytest

from wtodest.lmi import LmiProblem
from wtodest.sdp import (MalformedProblemError, SolveOutcome, Status,
                         UnboundedError, minimize_linear, solve_feasibility)


def test_feasible_box():
    prob = LmiProblem()
    X = prob.add_sym("X", 3, lower=1.0)
    prob.add_neg_def("cap", X - 5.0 * np.eye(3))
    out = solve_feasibility(prob)
    assert out.status is Status.FEASIBLE
    eigs = np.linalg.eigvalsh(out.assignment["X"])
    assert eigs.min() >= 1.0 - 1e-6 and eigs.max() <= 5.0 + 1e-6
    assert out.residual <= 1e-6


def test_infeasible_contradiction():
    prob = LmiProblem()
    X = prob.add_sym("X", 2, lower=2.0)
    prob.add_neg_def("cap", X - 1.0 * np.eye(2))
    out = solve_feasibility(prob)
    assert out.status is Status.INFEASIBLE
    assert out.assignment is None


def test_vacuous_problem_is_feasible():
    prob = LmiProblem()
    prob.add_sym("X", 2)
    prob.add_scalar("t")
    out = solve_feasibility(prob)
    assert out.feasible
    assert np.array_equal(out.assignment["X"], np.zeros((2, 2)))
    assert out.assignment["t"] == 0.0


def test_minimize_trace():
    prob = LmiProblem()
    X = prob.add_sym("X", 3, lower=1.0)
    import cvxpy as cp
    prob.set_objective(cp.trace(X))
    out = minimize_linear(prob)
    assert out.feasible
    assert out.objective == pytest.approx(3.0, abs=1e-4)


def test_minimize_requires_objective():
    prob = LmiProblem()
    prob.add_sym("X", 2, lower=0.0)
    with pytest.raises(MalformedProblemError):
        minimize_linear(prob)


def test_unbounded_objective_raises():
    prob = LmiProblem()
    t = prob.add_scalar("t", lower=0.0)
    prob.set_objective(-t)
    with pytest.raises(UnboundedError):
        minimize_linear(prob)


def test_outcome_flags():
    assert SolveOutcome(Status.FEASIBLE, {}, 0.0).feasible
    assert not SolveOutcome(Status.INFEASIBLE, None, np.inf).feasible
    assert not SolveOutcome(Status.ITERATION_LIMIT, None, np.inf).feasible
