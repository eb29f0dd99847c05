"""Structured matrix-inequality layer: decision variables, strict inequalities
via a fixed slack, Schur embedding, sector multiplier blocks, and assembly of
the stability / performance / synthesis conditions.

Expressions are built on cvxpy; every constraint is stored in the canonical
form G >> 0 with the strictness slack already folded in, so a solution is
checkable by a dense eigenvalue routine independent of the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .augment import EstimatorGains, augmented_grid, build_closed_loop
from .model import MjnnModel, SectorBounds, known_index_sets
from .protocol import NodePartition, WtodWeights, selector_matrix

EPS_STRICT = 1e-7
SIGMA_FLOOR = 1e-7


class RequiresFullTPError(ValueError):
    """Known-row assembly was asked to handle a masked transition row."""


@dataclass(frozen=True)
class DecisionVar:
    name: str
    kind: str          # "sym" | "scalar" | "matrix"
    shape: tuple[int, ...]
    lower: float | None = None  # spectral / scalar lower bound, if required


class LmiProblem:
    """Symmetric-matrix/scalar variables with PSD constraints G >> 0.

    ``couplings`` lists (P-name, X-name) pairs that the synthesis iteration
    drives toward mutual inverses; the solve path never enforces them.
    """

    def __init__(self, eps: float = EPS_STRICT):
        self.eps = eps
        self.specs: dict[str, DecisionVar] = {}
        self._vars: dict[str, cp.Variable] = {}
        self.constraints: list[tuple[str, cp.Expression]] = []
        self.objective: cp.Expression | None = None
        self.couplings: list[tuple[str, str]] = []
        self.parameters: dict[str, cp.Parameter] = {}

    # -- variables ---------------------------------------------------------

    def add_sym(self, name: str, size: int, lower: float | None = None) -> cp.Variable:
        v = self._register(DecisionVar(name, "sym", (size, size), lower),
                           cp.Variable((size, size), symmetric=True, name=name))
        if lower is not None:
            self.add_psd(f"{name}:lb", v - lower * np.eye(size))
        return v

    def add_scalar(self, name: str, lower: float | None = None) -> cp.Variable:
        v = self._register(DecisionVar(name, "scalar", (), lower),
                           cp.Variable(name=name))
        if lower is not None:
            self.constraints.append((f"{name}:lb", cp.reshape(v - lower, (1, 1), order="C")))
        return v

    def add_matrix(self, name: str, shape: tuple[int, int]) -> cp.Variable:
        return self._register(DecisionVar(name, "matrix", shape, None),
                              cp.Variable(shape, name=name))

    def _register(self, spec: DecisionVar, var: cp.Variable) -> cp.Variable:
        if spec.name in self.specs:
            raise ValueError(f"duplicate variable name {spec.name!r}")
        self.specs[spec.name] = spec
        self._vars[spec.name] = var
        return var

    def var(self, name: str) -> cp.Variable:
        return self._vars[name]

    def add_parameter(self, name: str, shape=()) -> cp.Parameter:
        p = cp.Parameter(shape, name=name)
        self.parameters[name] = p
        return p

    # -- constraints -------------------------------------------------------

    def add_psd(self, name: str, expr) -> None:
        """expr >= 0 in the semidefinite order (non-strict)."""
        self.constraints.append((name, _symmetrized(expr)))

    def add_neg_def(self, name: str, expr) -> None:
        """expr < 0, realized as expr + eps I <= 0."""
        m = expr.shape[0]
        self.add_psd(name, -expr - self.eps * np.eye(m))

    def add_pos_def(self, name: str, expr) -> None:
        """expr > 0, realized as expr - eps I >= 0."""
        m = expr.shape[0]
        self.add_psd(name, expr - self.eps * np.eye(m))

    def set_objective(self, expr) -> None:
        self.objective = expr

    # -- evaluation --------------------------------------------------------

    def cvxpy_constraints(self) -> list:
        return [expr >> 0 for _, expr in self.constraints]

    def assignment(self) -> dict[str, np.ndarray | float]:
        out = {}
        for name, var in self._vars.items():
            val = var.value
            if val is None:
                raise ValueError(f"variable {name!r} has no value")
            if self.specs[name].kind == "sym":
                val = 0.5 * (val + val.T)  # strip solver asymmetry noise
            out[name] = float(val) if self.specs[name].kind == "scalar" else np.asarray(val)
        return out

    def load_assignment(self, assignment: dict) -> None:
        for name, var in self._vars.items():
            var.value = assignment[name]

    def constraint_residuals(self) -> dict[str, float]:
        """-lambda_min of each constraint's value; positive means violated."""
        out = {}
        for name, expr in self.constraints:
            val = np.atleast_2d(np.asarray(expr.value, dtype=float))
            out[name] = float(-np.linalg.eigvalsh(0.5 * (val + val.T)).min())
        return out

    def worst_residual(self) -> float:
        return max(self.constraint_residuals().values(), default=0.0)

    def describe(self) -> str:
        lines = [f"variables ({len(self.specs)}):"]
        for s in self.specs.values():
            lines.append(f"  {s.name}: {s.kind}{list(s.shape)} lower={s.lower}")
        lines.append(f"constraints ({len(self.constraints)}):")
        for name, expr in self.constraints:
            lines.append(f"  {name}: {expr.shape[0]}x{expr.shape[1]} >> 0")
        if self.couplings:
            lines.append(f"inverse couplings ({len(self.couplings)}):")
        for p, x in self.couplings:
            lines.append(f"  {p} * {x} = I")
        return "\n".join(lines)


def _symmetrized(expr):
    if isinstance(expr, np.ndarray):
        return 0.5 * (expr + expr.T)
    return 0.5 * (expr + expr.T)


# ---------------------------------------------------------------------------
# small building blocks

def schur_embed(A1: np.ndarray, A2: np.ndarray, A3: np.ndarray) -> np.ndarray:
    """[[A1, A3^T], [A3, -A2]]; negative definite iff A1 + A3^T A2^-1 A3 < 0."""
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    A2 = np.atleast_2d(np.asarray(A2, dtype=float))
    A3 = np.atleast_2d(np.asarray(A3, dtype=float))
    if A3.shape != (A2.shape[0], A1.shape[0]):
        raise ValueError(f"A3 must be {A2.shape[0]}x{A1.shape[0]}, got {A3.shape}")
    return np.block([[A1, A3.T], [A3, -A2]])


def sector_multiplier_blocks(sector: SectorBounds) -> tuple[np.ndarray, np.ndarray]:
    """Multiplier blocks of the stacked sector condition (2n x 2n each)."""
    F1, F2 = sector.F1, sector.F2
    base3 = 0.5 * (F1.T @ F2 + F1 @ F2.T)
    base4 = 0.5 * (F1 + F2).T
    I2 = np.eye(2)
    return np.kron(I2, base3), np.kron(I2, base4)


@dataclass(frozen=True)
class _Geometry:
    """Constant lift matrices shared by all assembled conditions."""

    n: int
    mo: int
    r: int
    q: int
    na: int
    nh: int   # stacked state dim, 2(n + mo)
    nf: int   # stacked activation dim, 4n
    nw: int   # stacked disturbance dim, 4r
    F3L: np.ndarray      # nh x nh
    F4L: np.ndarray      # nh x nf
    E_check: list[np.ndarray]   # per mode, mo x nh
    D_hat: list[np.ndarray]     # per mode, mo x nw
    nu_terms: list[np.ndarray]  # per (m, mm): Qbar (Phi_mm - Phi_m), flattened
    node_count: int
    tau_factor: float


def _geometry(model: MjnnModel, partition: NodePartition, weights: WtodWeights) -> _Geometry:
    n, mo, r, q = model.n, model.m, model.r, model.q
    na = n + mo
    nh, nf, nw = 2 * na, 4 * n, 4 * r

    # lift the 2n-dimensional sector blocks onto the stacked state: the
    # activation argument pair is (plant state, plant-state error)
    S1 = np.zeros((n, nh)); S1[:, :n] = np.eye(n)
    S2 = np.zeros((n, nh)); S2[:, na:na + n] = np.eye(n)
    Shat = np.vstack([S1, S2])
    T = np.zeros((nf, 2 * n))
    T[0:n, 0:n] = np.eye(n)
    T[n:2 * n, 0:n] = np.eye(n)
    T[2 * n:3 * n, n:2 * n] = np.eye(n)
    T[3 * n:, n:2 * n] = np.eye(n)
    F3, F4 = sector_multiplier_blocks(model.sector)
    F3L = Shat.T @ (2.0 * F3) @ Shat
    F4L = Shat.T @ F4 @ T.T

    E_check, D_hat = [], []
    for mm in model.modes:
        E_check.append(np.hstack([mm.E, -np.eye(mo), np.zeros((mo, na))]))
        D_hat.append(np.hstack([np.zeros((mo, 2 * r)), np.zeros((mo, r)), mm.D2]))

    Qbar = weights.full()
    M = partition.node_count
    nu_terms = []
    for m in range(M):
        Phi_m = selector_matrix(partition, m)
        for mm in range(M):
            Phi_mm = selector_matrix(partition, mm)
            nu_terms.append(Qbar @ (Phi_mm - Phi_m))

    tau_factor = 1.0 + model.delay.tau_max - model.delay.tau_min
    return _Geometry(n=n, mo=mo, r=r, q=q, na=na, nh=nh, nf=nf, nw=nw,
                     F3L=F3L, F4L=F4L, E_check=E_check, D_hat=D_hat,
                     nu_terms=nu_terms, node_count=M, tau_factor=tau_factor)


def _nu_term(geo: _Geometry, m: int, mm: int) -> np.ndarray:
    return geo.nu_terms[m * geo.node_count + mm]


def _blockdiag2(top, bottom):
    zt = np.zeros((top.shape[0], bottom.shape[1]))
    zb = np.zeros((bottom.shape[0], top.shape[1]))
    return cp.bmat([[top, zt], [zb, bottom]])


def _vertices(model: MjnnModel, geo: _Geometry, P1, i: int, mn: int, mode: str):
    """Per-row list of (label, na x na) next-step weighting blocks.

    "vertex" enumerates the known-mass average and every unknown index;
    "remark-bound" emits the single averaged upper bound.
    """
    known, unknown, mass = known_index_sets(model.transitions, i)
    pi = model.transitions.probs
    if mode == "remark-bound":
        expr = 0
        for j in known:
            expr = expr + pi[i, j] * P1[j][mn]
        for j in unknown:
            expr = expr + (1.0 - mass) * P1[j][mn]
        return [("avg", expr)]
    out = []
    if known:
        expr = 0
        for j in known:
            expr = expr + pi[i, j] * P1[j][mn]
        out.append(("K", expr / mass if unknown else expr))
    for j in unknown:
        out.append((f"U{j}", P1[j][mn]))
    return out


def _omega2(geo: _Geometry, P1im, Z, rho1, rho2, nu, i: int,
            performance: bool):
    """Lower-right block grid over (state, delayed state, activations,
    delayed activations[, disturbance])."""
    nh, nf, nw = geo.nh, geo.nf, geo.nw
    Pii = _blockdiag2(P1im, P1im)
    Ec = geo.E_check[i]
    O11 = (-Pii + geo.tau_factor * Z - rho1 * geo.F3L - Ec.T @ nu @ Ec)
    O22 = -Z - rho2 * geo.F3L
    Z_h_f = np.zeros((nh, nf))
    rows = [
        [O11, np.zeros((nh, nh)), rho1 * geo.F4L, Z_h_f],
        [np.zeros((nh, nh)), O22, Z_h_f, rho2 * geo.F4L],
        [(rho1 * geo.F4L).T, Z_h_f.T, -rho1 * np.eye(nf), np.zeros((nf, nf))],
        [Z_h_f.T, (rho2 * geo.F4L).T, np.zeros((nf, nf)), -rho2 * np.eye(nf)],
    ]
    if performance:
        Dh = geo.D_hat[i]
        col = [-Ec.T @ nu @ Dh, np.zeros((nh, nw)),
               np.zeros((nf, nw)), np.zeros((nf, nw))]
        for row, blk in zip(rows, col):
            row.append(blk)
        rows.append([col[0].T, col[1].T, col[2].T, col[3].T,
                     -np.eye(nw) - Dh.T @ nu @ Dh])
    return cp.bmat(rows)


def _closed_loop_mats(model, partition, gains):
    grid = augmented_grid(model, partition)
    return grid, build_closed_loop(grid, gains, model)


def _analysis_like(model: MjnnModel, partition: NodePartition,
                   weights: WtodWeights, gains: EstimatorGains,
                   performance: bool, gamma, eps: float,
                   vertex_mode: str) -> LmiProblem:
    geo = _geometry(model, partition, weights)
    _, cl = _closed_loop_mats(model, partition, gains)
    prob = LmiProblem(eps=eps)

    P1 = [[prob.add_sym(f"P1_{i}_{m}", geo.na, lower=eps)
           for m in range(geo.node_count)] for i in range(model.N)]
    Z = prob.add_sym("Z", geo.nh, lower=eps)
    rho1 = [prob.add_scalar(f"rho1_{i}", lower=eps) for i in range(model.N)]
    rho2 = [prob.add_scalar(f"rho2_{i}", lower=eps) for i in range(model.N)]
    sigma = {}
    for i in range(model.N):
        for m in range(geo.node_count):
            for mm in range(geo.node_count):
                if mm != m:
                    sigma[(i, m, mm)] = prob.add_scalar(
                        f"sigma_{i}_{m}_{mm}", lower=SIGMA_FLOOR)

    for i in range(model.N):
        for m in range(geo.node_count):
            nu = sum(sigma[(i, m, mm)] * _nu_term(geo, m, mm)
                     for mm in range(geo.node_count) if mm != m)
            if geo.node_count == 1:
                nu = np.zeros((geo.mo, geo.mo))
            O2 = _omega2(geo, P1[i][m], Z, rho1[i], rho2[i], nu, i, performance)
            A, B, C, D = cl.A[(i, m)], cl.B[(i, m)], cl.C[(i, m)], cl.D[(i, m)]
            for mn in range(geo.node_count):
                for label, P1bar in _vertices(model, geo, P1, i, mn, vertex_mode):
                    Ups = _blockdiag2(P1bar, P1bar)
                    row = [Ups @ A, np.zeros((geo.nh, geo.nh)), Ups @ B, Ups @ C]
                    if performance:
                        row.append(Ups @ D)
                    row_expr = cp.hstack(row)
                    big = cp.bmat([[-Ups, row_expr], [row_expr.T, O2]])
                    prob.add_neg_def(f"stab_{i}_{m}_{mn}_{label}", big)
            if performance:
                Pii = _blockdiag2(P1[i][m], P1[i][m])
                Mt = cl.M[(i, m)]
                gam2 = gamma ** 2 if not isinstance(gamma, cp.Parameter) else gamma
                peak = cp.bmat([[Pii, Mt.T],
                                [Mt, gam2 * np.eye(geo.q)]])
                prob.add_pos_def(f"peak_{i}_{m}", peak)
    return prob


def assemble_analysis_partial(model: MjnnModel, partition: NodePartition,
                              weights: WtodWeights, gains: EstimatorGains,
                              eps: float = EPS_STRICT,
                              vertex_mode: str = "vertex") -> LmiProblem:
    """Mean-square stability conditions valid under any transition mask."""
    return _analysis_like(model, partition, weights, gains,
                          performance=False, gamma=None, eps=eps,
                          vertex_mode=vertex_mode)


def assemble_analysis_known(model: MjnnModel, partition: NodePartition,
                            weights: WtodWeights, gains: EstimatorGains,
                            eps: float = EPS_STRICT) -> LmiProblem:
    """Stability conditions requiring every transition row fully known."""
    if not model.transitions.fully_known:
        raise RequiresFullTPError("transition grid has unknown entries")
    return _analysis_like(model, partition, weights, gains,
                          performance=False, gamma=None, eps=eps,
                          vertex_mode="vertex")


def assemble_performance(model: MjnnModel, partition: NodePartition,
                         weights: WtodWeights, gains: EstimatorGains,
                         gamma, eps: float = EPS_STRICT,
                         vertex_mode: str = "vertex") -> LmiProblem:
    """Stability plus peak-error-over-disturbance-energy level gamma."""
    if not isinstance(gamma, cp.Parameter) and gamma <= 0:
        raise ValueError("gamma must be positive")
    return _analysis_like(model, partition, weights, gains,
                          performance=True, gamma=gamma, eps=eps,
                          vertex_mode=vertex_mode)


def assemble_synthesis(model: MjnnModel, partition: NodePartition,
                       weights: WtodWeights, gamma,
                       eps: float = EPS_STRICT) -> LmiProblem:
    """Gain-design conditions with inverse couplings registered for the
    complementarity iteration; jointly linear in all declared variables."""
    geo = _geometry(model, partition, weights)
    grid = augmented_grid(model, partition)
    prob = LmiProblem(eps=eps)

    P1 = [[prob.add_sym(f"P1_{i}_{m}", geo.na, lower=eps)
           for m in range(geo.node_count)] for i in range(model.N)]
    X1 = [[prob.add_sym(f"X1_{i}_{m}", geo.na, lower=eps)
           for m in range(geo.node_count)] for i in range(model.N)]
    K = [[prob.add_matrix(f"K_{i}_{m}", (geo.na, geo.mo))
          for m in range(geo.node_count)] for i in range(model.N)]
    Z = prob.add_sym("Z", geo.nh, lower=eps)
    rho1 = [prob.add_scalar(f"rho1_{i}", lower=eps) for i in range(model.N)]
    rho2 = [prob.add_scalar(f"rho2_{i}", lower=eps) for i in range(model.N)]
    sigma = {}
    for i in range(model.N):
        for m in range(geo.node_count):
            for mm in range(geo.node_count):
                if mm != m:
                    sigma[(i, m, mm)] = prob.add_scalar(
                        f"sigma_{i}_{m}_{mm}", lower=SIGMA_FLOOR)

    pi = model.transitions.probs
    for i in range(model.N):
        known, unknown, mass = known_index_sets(model.transitions, i)
        for m in range(geo.node_count):
            p = grid[(i, m)]
            Atil = _blockdiag2(p.A_bar, p.A_bar - K[i][m] @ p.E_bar)
            Dtil = _blockdiag2(p.D1_bar, p.D1_bar - K[i][m] @ p.D2_bar)
            Btil = np.kron(np.eye(2), p.B_bar)
            Ctil = np.kron(np.eye(2), p.C_bar)
            nu = sum(sigma[(i, m, mm)] * _nu_term(geo, m, mm)
                     for mm in range(geo.node_count) if mm != m)
            if geo.node_count == 1:
                nu = np.zeros((geo.mo, geo.mo))
            O2 = _omega2(geo, P1[i][m], Z, rho1[i], rho2[i], nu, i,
                         performance=True)
            Omega1 = cp.hstack([Atil, np.zeros((geo.nh, geo.nh)), Btil, Ctil, Dtil])
            for mn in range(geo.node_count):
                if known:
                    Xblocks = [_blockdiag2(X1[j][mn], X1[j][mn]) for j in known]
                    s = len(known)
                    TL_rows = []
                    for a in range(s):
                        row = [mass * Xblocks[a] if a == b else
                               np.zeros((geo.nh, geo.nh)) for b in range(s)]
                        TL_rows.append(row)
                    TL = -cp.bmat(TL_rows)
                    TR = cp.vstack([math.sqrt(pi[i, j]) * Omega1 for j in known])
                    big = cp.bmat([[TL, TR], [TR.T, O2]])
                    prob.add_neg_def(f"syn_{i}_{m}_{mn}_K", big)
                for j in unknown:
                    Xj = _blockdiag2(X1[j][mn], X1[j][mn])
                    big = cp.bmat([[-Xj, Omega1], [Omega1.T, O2]])
                    prob.add_neg_def(f"syn_{i}_{m}_{mn}_U{j}", big)

            Pii = _blockdiag2(P1[i][m], P1[i][m])
            Mt = np.hstack([np.zeros((geo.q, geo.na)),
                            grid[(i, m)].M_bar])
            gam2 = gamma ** 2 if not isinstance(gamma, cp.Parameter) else gamma
            peak = cp.bmat([[Pii, Mt.T], [Mt, gam2 * np.eye(geo.q)]])
            prob.add_pos_def(f"peak_{i}_{m}", peak)

    Ina = np.eye(geo.na)
    for j in range(model.N):
        for mn in range(geo.node_count):
            link = cp.bmat([[P1[j][mn], Ina], [Ina, X1[j][mn]]])
            prob.add_psd(f"link_{j}_{mn}", link)
            prob.couplings.append((f"P1_{j}_{mn}", f"X1_{j}_{mn}"))
    return prob


def extract_gains(model: MjnnModel, partition: NodePartition,
                  assignment: dict) -> EstimatorGains:
    return EstimatorGains({
        (i, m): np.asarray(assignment[f"K_{i}_{m}"])
        for i in range(model.N) for m in range(partition.node_count)})


# ---------------------------------------------------------------------------
# numeric replay of a certificate, independent of the cvxpy assembly path

def certified_quadratic(model: MjnnModel, partition: NodePartition,
                        weights: WtodWeights, gains: EstimatorGains,
                        assignment: dict, i: int, m: int, mn: int) -> np.ndarray:
    """Schur complement of the stability block for a fully known row:
    Omega = Omega1^T Pbar Omega1 + Omega2, evaluated with plain numpy."""
    geo = _geometry(model, partition, weights)
    _, cl = _closed_loop_mats(model, partition, gains)
    pi = model.transitions.probs
    if np.isnan(pi[i]).any():
        raise RequiresFullTPError("certificate replay needs a fully known row")

    P1bar = sum(pi[i, j] * np.asarray(assignment[f"P1_{j}_{mn}"])
                for j in range(model.N))
    Pbar = np.kron(np.eye(2), P1bar)
    Omega1 = np.hstack([cl.A[(i, m)], np.zeros((geo.nh, geo.nh)),
                        cl.B[(i, m)], cl.C[(i, m)]])

    P1im = np.asarray(assignment[f"P1_{i}_{m}"])
    Z = np.asarray(assignment["Z"])
    rho1 = float(assignment[f"rho1_{i}"])
    rho2 = float(assignment[f"rho2_{i}"])
    nu = np.zeros((geo.mo, geo.mo))
    for mm in range(geo.node_count):
        if mm != m:
            nu = nu + float(assignment[f"sigma_{i}_{m}_{mm}"]) * _nu_term(geo, m, mm)
    Ec = geo.E_check[i]
    Pii = np.kron(np.eye(2), P1im)
    O11 = -Pii + geo.tau_factor * Z - rho1 * geo.F3L - Ec.T @ nu @ Ec
    O22 = -Z - rho2 * geo.F3L
    nh, nf = geo.nh, geo.nf
    O2 = np.zeros((2 * nh + 2 * nf, 2 * nh + 2 * nf))
    O2[:nh, :nh] = O11
    O2[nh:2 * nh, nh:2 * nh] = O22
    O2[:nh, 2 * nh:2 * nh + nf] = rho1 * geo.F4L
    O2[2 * nh:2 * nh + nf, :nh] = (rho1 * geo.F4L).T
    O2[nh:2 * nh, 2 * nh + nf:] = rho2 * geo.F4L
    O2[2 * nh + nf:, nh:2 * nh] = (rho2 * geo.F4L).T
    O2[2 * nh:2 * nh + nf, 2 * nh:2 * nh + nf] = -rho1 * np.eye(nf)
    O2[2 * nh + nf:, 2 * nh + nf:] = -rho2 * np.eye(nf)
    return Omega1.T @ Pbar @ Omega1 + O2
