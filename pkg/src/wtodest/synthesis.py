"""Gain synthesis: cone complementarity iteration over the coupled design
conditions, a bisection search for the attenuation level, and the
analysis-side verification usable on externally supplied gains."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import cvxpy as cp
import numpy as np

from .augment import EstimatorGains
from .lmi import assemble_performance, assemble_synthesis, extract_gains
from .model import MjnnModel, validate_model
from .protocol import NodePartition, WtodWeights
from .sdp import SolveOutcome, Status, solve_feasibility


class SynthesisStatus(Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    INFEASIBLE_INIT = "InfeasibleInit"


class NoFeasibleLevelError(RuntimeError):
    pass


@dataclass
class CclConfig:
    gamma: float = 1.0
    max_iters: int = 50
    mu: float = 1e-6
    eps: float = 1e-7
    seed: int = 0  # recorded for provenance; the solve path is deterministic

    def __post_init__(self):
        if self.max_iters < 1 or self.mu <= 0:
            raise ValueError("need max_iters >= 1 and mu > 0")


@dataclass
class SynthesisResult:
    status: SynthesisStatus
    gains: EstimatorGains | None
    gamma: float
    certificates: dict | None
    ccl_trace: list[dict] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is SynthesisStatus.CONVERGED


def ccl_synthesize(model: MjnnModel, partition: NodePartition,
                   weights: WtodWeights, config: CclConfig) -> SynthesisResult:
    """Algorithm: relax the inverse couplings to a semidefinite link, then
    iterate trace minimization against frozen anchors until the coupling
    trace matches its ideal value and the extracted gains verify."""
    validate_model(model)
    prob = assemble_synthesis(model, partition, weights, config.gamma,
                              eps=config.eps)
    na = model.n + model.m
    pairs = prob.couplings
    target = 2.0 * len(pairs) * na

    anchors = []
    obj_terms = []
    for pn, xn in pairs:
        Pt = cp.Parameter((na, na), symmetric=True)
        Xt = cp.Parameter((na, na), symmetric=True)
        anchors.append((pn, xn, Pt, Xt))
        obj_terms.append(cp.trace(Pt @ prob.var(xn) + Xt @ prob.var(pn)))
    minimize = cp.Problem(cp.Minimize(cp.sum(obj_terms)),
                          prob.cvxpy_constraints())

    init = solve_feasibility(prob)
    if not init.feasible:
        return SynthesisResult(SynthesisStatus.INFEASIBLE_INIT, None,
                               config.gamma, None)
    assignment = init.assignment

    trace_rows = []
    for t in range(config.max_iters):
        for pn, xn, Pt, Xt in anchors:
            Pt.value = assignment[pn]
            Xt.value = assignment[xn]
        minimize.solve(solver="CLARABEL")
        if minimize.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            break
        assignment = prob.assignment()
        objective = float(minimize.value)
        residual = abs(objective - target)
        coupling = max(
            float(np.linalg.norm(assignment[pn] @ assignment[xn] - np.eye(na)))
            for pn, xn in pairs)
        trace_rows.append({"iter": t, "objective": objective,
                           "eq_residual": residual,
                           "max_coupling_residual": coupling})
        if residual < config.mu:
            gains = extract_gains(model, partition, assignment)
            check = verify_gains(model, partition, weights, gains,
                                 config.gamma, eps=config.eps)
            if check.feasible:
                return SynthesisResult(SynthesisStatus.CONVERGED, gains,
                                       config.gamma, check.assignment,
                                       trace_rows)
    return SynthesisResult(SynthesisStatus.MAX_ITERS, None, config.gamma,
                           None, trace_rows)


def verify_gains(model: MjnnModel, partition: NodePartition,
                 weights: WtodWeights, gains: EstimatorGains,
                 gamma: float, eps: float = 1e-7) -> SolveOutcome:
    """Analysis-side performance check; Infeasible is an answer, not an error."""
    prob = assemble_performance(model, partition, weights, gains, gamma,
                                eps=eps)
    return solve_feasibility(prob)


def bisect_gamma(model: MjnnModel, partition: NodePartition,
                 weights: WtodWeights, gamma_lo: float, gamma_hi: float,
                 steps: int = 10, config: CclConfig | None = None,
                 probe=None) -> tuple[float, SynthesisResult]:
    """Smallest attenuation level at which synthesis converges, by bisection.

    Feasibility is assumed monotone in the level (spot-checked by tests).
    ``probe(gamma, result)`` is called after every synthesis attempt.
    """
    if gamma_lo > gamma_hi:
        raise ValueError("need gamma_lo <= gamma_hi")
    base = config or CclConfig()

    def attempt(gamma: float) -> SynthesisResult:
        cfg = CclConfig(gamma=gamma, max_iters=base.max_iters, mu=base.mu,
                        eps=base.eps, seed=base.seed)
        result = ccl_synthesize(model, partition, weights, cfg)
        if probe is not None:
            probe(gamma, result)
        return result

    best = attempt(gamma_hi)
    if not best.converged:
        raise NoFeasibleLevelError(f"no feasible level at gamma={gamma_hi}")
    best_gamma = gamma_hi
    if gamma_lo == gamma_hi:
        return best_gamma, best

    lo_result = attempt(gamma_lo)
    if lo_result.converged:
        return gamma_lo, lo_result

    lo, hi = gamma_lo, gamma_hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        res = attempt(mid)
        if res.converged:
            hi, best_gamma, best = mid, mid, res
        else:
            lo = mid
    return best_gamma, best
