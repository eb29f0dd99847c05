"""Protocol-augmented plant, estimator gain grids, and the stacked
plant/error closed loop, one instance per (mode, selected node) pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MjnnModel, activation_apply
from .protocol import NodePartition, selector_matrix


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentedPlant:
    """Blocks of the scheduled plant for one (mode, node) pair.

    The augmented state stacks the plant state (n) over the transmitted
    output memory (m); na = n + m below.
    """

    A_bar: np.ndarray   # na x na
    B_bar: np.ndarray   # na x 2n
    C_bar: np.ndarray   # na x 2n
    D1_bar: np.ndarray  # na x 2r
    E_bar: np.ndarray   # m x na
    D2_bar: np.ndarray  # m x 2r
    M_bar: np.ndarray   # q x na


@dataclass(frozen=True)
class EstimatorGains:
    """One (n+m) x m gain per (mode, node) pair."""

    K: dict[tuple[int, int], np.ndarray]

    @classmethod
    def zeros(cls, model: MjnnModel, partition: NodePartition) -> "EstimatorGains":
        na = model.n + model.m
        return cls({(i, mm): np.zeros((na, model.m))
                    for i in range(model.N) for mm in range(partition.node_count)})


@dataclass(frozen=True)
class ClosedLoopSystem:
    """Stacked [plant-state; estimation-error] dynamics per (mode, node).

    The stacked state has dimension 2(n+m); the stacked activation input has
    dimension 4n and the stacked disturbance 4r (the disturbance pair is
    duplicated, so its squared norm double-counts).
    """

    A: dict[tuple[int, int], np.ndarray]
    B: dict[tuple[int, int], np.ndarray]
    C: dict[tuple[int, int], np.ndarray]
    D: dict[tuple[int, int], np.ndarray]
    M: dict[tuple[int, int], np.ndarray]
    n: int
    m: int
    q: int
    r: int

    @property
    def na(self) -> int:
        return self.n + self.m

    @property
    def nh(self) -> int:
        return 2 * self.na


def build_augmented(model: MjnnModel, partition: NodePartition,
                    i: int, node: int) -> AugmentedPlant:
    """Assemble the scheduled-plant blocks for mode ``i`` and selected ``node``."""
    if not 0 <= i < model.N:
        raise IndexError(f"mode {i} out of range")
    if not 0 <= node < partition.node_count:
        raise IndexError(f"node {node} out of range")
    mm = model.modes[i]
    n, m, r = mm.n, mm.m, mm.r
    Phi = selector_matrix(partition, node)
    Im = np.eye(m)

    A_bar = np.block([
        [mm.A, np.zeros((n, m))],
        [Phi @ mm.E, Im - Phi],
    ])
    B_bar = np.block([
        [mm.B, np.zeros((n, n))],
        [np.zeros((m, 2 * n))],
    ])
    C_bar = np.block([
        [mm.C, np.zeros((n, n))],
        [np.zeros((m, 2 * n))],
    ])
    D1_bar = np.block([
        [mm.D1, np.zeros((n, r))],
        [np.zeros((m, r)), Phi @ mm.D2],
    ])
    E_bar = np.hstack([Phi @ mm.E, Im - Phi])
    D2_bar = np.hstack([np.zeros((m, r)), Phi @ mm.D2])
    M_bar = np.hstack([mm.M, np.zeros((mm.q, m))])
    return AugmentedPlant(A_bar, B_bar, C_bar, D1_bar, E_bar, D2_bar, M_bar)


def augmented_grid(model: MjnnModel, partition: NodePartition) -> dict[tuple[int, int], AugmentedPlant]:
    return {(i, node): build_augmented(model, partition, i, node)
            for i in range(model.N) for node in range(partition.node_count)}


def augmented_activation(model: MjnnModel, x_bar: np.ndarray) -> np.ndarray:
    """Apply the activation to the plant-state slice and stack the result twice."""
    fx = activation_apply(model, np.asarray(x_bar, dtype=float)[: model.n])
    return np.concatenate([fx, fx])


def build_closed_loop(aug: dict[tuple[int, int], AugmentedPlant],
                      gains: EstimatorGains,
                      model: MjnnModel) -> ClosedLoopSystem:
    """Stack plant and error dynamics; the error block is A_bar - K E_bar."""
    if set(aug) != set(gains.K):
        raise GridMismatchError("gain grid does not cover the (mode, node) grid")
    A, B, C, D, M = {}, {}, {}, {}, {}
    for key, p in aug.items():
        K = gains.K[key]
        if K.shape != (p.A_bar.shape[0], p.E_bar.shape[0]):
            raise GridMismatchError(f"gain {key} has shape {K.shape}")
        Aerr = p.A_bar - K @ p.E_bar
        Derr = p.D1_bar - K @ p.D2_bar
        A[key] = _blockdiag(p.A_bar, Aerr)
        B[key] = _blockdiag(p.B_bar, p.B_bar)
        C[key] = _blockdiag(p.C_bar, p.C_bar)
        D[key] = _blockdiag(p.D1_bar, Derr)
        M[key] = np.hstack([np.zeros_like(p.M_bar), p.M_bar])
    return ClosedLoopSystem(A=A, B=B, C=C, D=D, M=M,
                            n=model.n, m=model.m, q=model.q, r=model.r)


def _blockdiag(top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    rt, ct = top.shape
    rb, cb = bottom.shape
    out = np.zeros((rt + rb, ct + cb))
    out[:rt, :ct] = top
    out[rt:, ct:] = bottom
    return out
