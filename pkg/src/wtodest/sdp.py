"""Semidefinite feasibility / linear-objective solves over LmiProblem, with a
solver-independent eigenvalue replay of every returned assignment."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import cvxpy as cp
import numpy as np

from .lmi import LmiProblem

DEFAULT_TOL = 1e-6
SOLVER_CHAIN = ("CLARABEL", "SCS")
SOLVER_OPTS = {
    "CLARABEL": {"max_iter": 1000, "time_limit": 120.0},
    "SCS": {"max_iters": 20000},
}


class MalformedProblemError(ValueError):
    pass


class UnboundedError(RuntimeError):
    pass


class Status(Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class SolveOutcome:
    status: Status
    assignment: dict | None
    residual: float
    objective: float | None = None

    @property
    def feasible(self) -> bool:
        return self.status is Status.FEASIBLE


def _run_chain(cp_problem: cp.Problem) -> str | None:
    last_status = None
    for solver in SOLVER_CHAIN:
        try:
            with warnings.catch_warnings():
                # accuracy is judged by our own eigenvalue replay
                warnings.simplefilter("ignore", UserWarning)
                cp_problem.solve(solver=solver, **SOLVER_OPTS.get(solver, {}))
        except cp.error.SolverError:
            continue
        last_status = cp_problem.status
        if last_status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE,
                           cp.INFEASIBLE, cp.UNBOUNDED):
            break
    return last_status


def _vacuous(problem: LmiProblem) -> SolveOutcome:
    for name, var in problem._vars.items():
        spec = problem.specs[name]
        var.value = 0.0 if spec.kind == "scalar" else np.zeros(spec.shape)
    return SolveOutcome(Status.FEASIBLE, problem.assignment(), 0.0, 0.0)


def _replay(problem: LmiProblem, tol: float, objective_value,
            infeasible_hint: bool) -> SolveOutcome:
    assignment = problem.assignment()
    # independent replay: dense eigenvalues of every constraint block
    problem.load_assignment(assignment)
    residual = problem.worst_residual()
    if residual <= tol:
        return SolveOutcome(Status.FEASIBLE, assignment, residual,
                            objective_value)
    if infeasible_hint:
        return SolveOutcome(Status.INFEASIBLE, None, residual)
    return SolveOutcome(Status.ITERATION_LIMIT, assignment, residual,
                        objective_value)


def _solve(problem: LmiProblem, objective, tol: float) -> SolveOutcome:
    if not problem.constraints:
        return _vacuous(problem)

    cp_problem = cp.Problem(cp.Minimize(objective), problem.cvxpy_constraints())
    last_status = _run_chain(cp_problem)
    if last_status is None:
        raise MalformedProblemError("no solver accepted the problem")

    if last_status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        raise UnboundedError("objective decreases without bound")
    if last_status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return SolveOutcome(Status.INFEASIBLE, None, np.inf)
    if last_status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return SolveOutcome(Status.ITERATION_LIMIT, None, np.inf)
    return _replay(problem, tol, float(cp_problem.value),
                   infeasible_hint=False)


def solve_feasibility(problem: LmiProblem, tol: float = DEFAULT_TOL) -> SolveOutcome:
    """Find any assignment satisfying every constraint to within ``tol``.

    Solved as margin maximization (largest t with every block >= t I), which
    interior-point solvers handle far more reliably than a flat objective;
    the verdict still comes from an eigenvalue replay of the assignment.
    """
    if not problem.constraints:
        return _vacuous(problem)

    t = cp.Variable()
    cons = [expr - t * np.eye(expr.shape[0]) >> 0
            for _, expr in problem.constraints]
    cons.append(t <= 1.0)
    cp_problem = cp.Problem(cp.Maximize(t), cons)
    last_status = _run_chain(cp_problem)
    if last_status is None:
        raise MalformedProblemError("no solver accepted the problem")
    if last_status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return SolveOutcome(Status.ITERATION_LIMIT, None, np.inf)
    margin = float(t.value)
    return _replay(problem, tol, margin,
                   infeasible_hint=(margin < -tol))


def minimize_linear(problem: LmiProblem, objective=None,
                    tol: float = DEFAULT_TOL) -> SolveOutcome:
    """Minimize a linear functional of the decision variables."""
    obj = objective if objective is not None else problem.objective
    if obj is None:
        raise MalformedProblemError("no objective given")
    return _solve(problem, obj, tol)
