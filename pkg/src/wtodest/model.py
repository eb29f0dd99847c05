"""Plant model: per-mode matrices, Markov chain with masked transition entries,
activation sector bounds and delay specification.

All index arguments are 0-based in code; serialized gain keys use 1-based
"i,m" labels to match the on-disk format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PROB_TOL = 1e-12


class ModelValidationError(ValueError):
    """Raised when a model fails structural validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class Violation:
    kind: str  # DimensionMismatch | RowSumViolation | DelayOrderViolation
    where: str
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.where}: {self.detail}"


@dataclass(frozen=True)
class ModeMatrices:
    """Coefficient matrices of one Markov mode.

    A, B, C are n x n, D1 is n x r, E is m x n, D2 is m x r, M is q x n.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    E: np.ndarray
    M: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.E.shape[0]

    @property
    def q(self) -> int:
        return self.M.shape[0]

    @property
    def r(self) -> int:
        return self.D1.shape[1]


@dataclass(frozen=True)
class TransitionSpec:
    """N x N transition grid; unknown cells are NaN in ``probs``."""

    probs: np.ndarray  # float matrix, NaN marks an unknown entry

    @property
    def N(self) -> int:
        return self.probs.shape[0]

    def is_known(self, i: int, j: int) -> bool:
        return not math.isnan(self.probs[i, j])

    @property
    def fully_known(self) -> bool:
        return not np.isnan(self.probs).any()


@dataclass(frozen=True)
class TransitionCompletion:
    """Row-stochastic ground-truth chain used only by the simulator."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
            raise ValueError("completion must be a square matrix")
        if np.any(pi < -PROB_TOL) or np.any(pi > 1 + PROB_TOL):
            raise ValueError("completion entries must lie in [0, 1]")
        rowsums = pi.sum(axis=1)
        if np.any(np.abs(rowsums - 1.0) > PROB_TOL):
            raise ValueError(f"completion rows must sum to 1, got {rowsums}")
        object.__setattr__(self, "pi", pi)

    def check_against(self, spec: TransitionSpec) -> None:
        """Every known cell of ``spec`` must match this completion exactly."""
        for i in range(spec.N):
            for j in range(spec.N):
                if spec.is_known(i, j) and self.pi[i, j] != spec.probs[i, j]:
                    raise ValueError(
                        f"completion[{i},{j}]={self.pi[i, j]} disagrees with "
                        f"known entry {spec.probs[i, j]}"
                    )


@dataclass(frozen=True)
class SectorBounds:
    F1: np.ndarray
    F2: np.ndarray


@dataclass(frozen=True)
class DelaySpec:
    tau_min: int
    tau_max: int


@dataclass(frozen=True)
class Activation:
    """Componentwise activation; the built-in family is f_l(x) = tanh(c_l x)."""

    kind: str = "tanh"
    scales: np.ndarray | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "tanh":
            return np.tanh(self.scales * x)
        return self.func(x)


@dataclass(frozen=True)
class MjnnModel:
    modes: tuple[ModeMatrices, ...]
    transitions: TransitionSpec
    sector: SectorBounds
    delay: DelaySpec
    activation: Activation

    @property
    def N(self) -> int:
        return len(self.modes)

    @property
    def n(self) -> int:
        return self.modes[0].n

    @property
    def m(self) -> int:
        return self.modes[0].m

    @property
    def q(self) -> int:
        return self.modes[0].q

    @property
    def r(self) -> int:
        return self.modes[0].r


def model_violations(model: MjnnModel) -> list[Violation]:
    """Collect every structural violation; empty list means the model is valid."""
    out: list[Violation] = []
    ref = model.modes[0]
    n, m, q, r = ref.n, ref.m, ref.q, ref.r
    shapes = {
        "A": (n, n), "B": (n, n), "C": (n, n),
        "D1": (n, r), "D2": (m, r), "E": (m, n), "M": (q, n),
    }
    for i, mm in enumerate(model.modes):
        for name, want in shapes.items():
            mat = getattr(mm, name)
            if mat.shape != want:
                out.append(Violation(
                    "DimensionMismatch", f"mode {i}", f"{name} is {mat.shape}, expected {want}"))
            elif not np.all(np.isfinite(mat)):
                out.append(Violation(
                    "DimensionMismatch", f"mode {i}", f"{name} has non-finite entries"))

    spec = model.transitions
    if spec.N != model.N:
        out.append(Violation(
            "DimensionMismatch", "transitions",
            f"grid is {spec.N}x{spec.N} for {model.N} modes"))
    else:
        for i in range(spec.N):
            row = spec.probs[i]
            known = row[~np.isnan(row)]
            if np.any(known < -PROB_TOL) or np.any(known > 1 + PROB_TOL):
                out.append(Violation(
                    "RowSumViolation", f"row {i}", "known entries outside [0, 1]"))
            mass = float(known.sum())
            has_unknown = np.isnan(row).any()
            if has_unknown:
                if mass > 1 + PROB_TOL:
                    out.append(Violation(
                        "RowSumViolation", f"row {i}",
                        f"known mass {mass} exceeds 1"))
            elif abs(mass - 1.0) > PROB_TOL:
                out.append(Violation(
                    "RowSumViolation", f"row {i}", f"row sums to {mass}, not 1"))

    for name in ("F1", "F2"):
        mat = getattr(model.sector, name)
        if mat.shape != (n, n):
            out.append(Violation(
                "DimensionMismatch", "sector", f"{name} is {mat.shape}, expected {(n, n)}"))

    d = model.delay
    if not (0 < d.tau_min <= d.tau_max):
        out.append(Violation(
            "DelayOrderViolation", "delay",
            f"need 0 < tau_min <= tau_max, got [{d.tau_min}, {d.tau_max}]"))
    return out


def validate_model(model: MjnnModel) -> MjnnModel:
    """Return the model unchanged, or raise ModelValidationError listing all violations."""
    violations = model_violations(model)
    if violations:
        raise ModelValidationError(violations)
    return model


def known_index_sets(spec: TransitionSpec, i: int) -> tuple[tuple[int, ...], tuple[int, ...], float]:
    """Split row ``i`` into known / unknown column indices and the known mass."""
    row = spec.probs[i]
    known = tuple(j for j in range(spec.N) if not math.isnan(row[j]))
    unknown = tuple(j for j in range(spec.N) if math.isnan(row[j]))
    mass = float(sum(row[j] for j in known))
    return known, unknown, mass


def sample_next_mode(completion: TransitionCompletion, i: int, u: float) -> int:
    """Inverse-CDF draw of the successor mode from row ``i`` given u in [0, 1)."""
    cdf = np.cumsum(completion.pi[i])
    j = int(np.searchsorted(cdf, u, side="right"))
    return min(j, completion.pi.shape[0] - 1)


def sample_delay(spec: DelaySpec, u: float) -> int:
    """Uniform integer on [tau_min, tau_max] via inverse CDF of equal bins."""
    span = spec.tau_max - spec.tau_min + 1
    return spec.tau_min + min(int(u * span), span - 1)


def activation_apply(model: MjnnModel, x: np.ndarray) -> np.ndarray:
    return model.activation(np.asarray(x, dtype=float))


def sector_residual(sector: SectorBounds, x: np.ndarray, fx: np.ndarray) -> float:
    """[fx - F1 x]^T [fx - F2 x]; non-positive iff the sector condition holds at x."""
    x = np.asarray(x, dtype=float)
    fx = np.asarray(fx, dtype=float)
    return float((fx - sector.F1 @ x) @ (fx - sector.F2 @ x))


# ---------------------------------------------------------------------------
# model files

@dataclass(frozen=True)
class ModelBundle:
    """A model file: plant plus protocol configuration and optional gain grid."""

    model: MjnnModel
    partition: tuple[int, ...]
    weights: list[np.ndarray] | None  # None means identity weights
    gains: dict[tuple[int, int], np.ndarray] | None = None


def _mat(obj) -> np.ndarray:
    return np.asarray(obj, dtype=float)


def parse_gains(obj: dict) -> dict[tuple[int, int], np.ndarray]:
    gains = {}
    for key, val in obj.items():
        i_s, m_s = key.split(",")
        gains[(int(i_s) - 1, int(m_s) - 1)] = _mat(val)
    return gains


def dump_gains(gains: dict[tuple[int, int], np.ndarray]) -> dict:
    return {f"{i + 1},{m + 1}": K.tolist() for (i, m), K in sorted(gains.items())}


def load_model_file(path: str) -> ModelBundle:
    with open(path) as fh:
        doc = json.load(fh)
    return parse_model_doc(doc)


def parse_model_doc(doc: dict) -> ModelBundle:
    modes = tuple(
        ModeMatrices(
            A=_mat(m["A"]), B=_mat(m["B"]), C=_mat(m["C"]),
            D1=_mat(m["D1"]), D2=_mat(m["D2"]), E=_mat(m["E"]), M=_mat(m["M"]))
        for m in doc["modes"]
    )
    grid = np.array(
        [[math.nan if cell == "?" else float(cell) for cell in row]
         for row in doc["transitions"]],
        dtype=float,
    )
    act = doc.get("activation", {"type": "tanh", "scales": [1.0] * modes[0].n})
    if act["type"] != "tanh":
        raise ValueError(f"unsupported activation type {act['type']!r} in model file")
    model = MjnnModel(
        modes=modes,
        transitions=TransitionSpec(grid),
        sector=SectorBounds(F1=_mat(doc["sector"]["F1"]), F2=_mat(doc["sector"]["F2"])),
        delay=DelaySpec(int(doc["delay"]["min"]), int(doc["delay"]["max"])),
        activation=Activation(kind="tanh", scales=_mat(act["scales"])),
    )
    proto = doc.get("protocol", {"partition": [model.m], "weights": "identity"})
    partition = tuple(int(d) for d in proto["partition"])
    wspec = proto.get("weights", "identity")
    weights = None if wspec == "identity" else [_mat(w) for w in wspec]
    gains = parse_gains(doc["gains"]) if "gains" in doc else None
    return ModelBundle(model=model, partition=partition, weights=weights, gains=gains)


def completion_from_spec(spec: TransitionSpec) -> TransitionCompletion:
    """Usable only for a fully known grid; masked specs need an explicit completion."""
    if not spec.fully_known:
        raise ValueError("transition grid has unknown entries; supply a completion")
    return TransitionCompletion(spec.probs.copy())
