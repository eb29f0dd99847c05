"""Weight try-once-discard scheduling: quadratic node selection and the
transmitted-signal memory update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NodePartition:
    """Partition of the m output coordinates into contiguous sensor nodes."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if not self.dims or any(d < 1 for d in self.dims):
            raise ValueError("every node must own at least one coordinate")

    @property
    def node_count(self) -> int:
        return len(self.dims)

    @property
    def total(self) -> int:
        return sum(self.dims)

    def block(self, node: int) -> slice:
        off = sum(self.dims[:node])
        return slice(off, off + self.dims[node])


@dataclass(frozen=True)
class WtodWeights:
    """One symmetric positive-definite weight block per node."""

    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        for idx, Q in enumerate(self.blocks):
            if not np.allclose(Q, Q.T):
                raise ValueError(f"weight block {idx} is not symmetric")
            if np.linalg.eigvalsh(Q).min() <= 0:
                raise ValueError(f"weight block {idx} is not positive definite")

    @classmethod
    def identity(cls, partition: NodePartition) -> "WtodWeights":
        return cls(tuple(np.eye(d) for d in partition.dims))

    def full(self) -> np.ndarray:
        """Block-diagonal stacked weight over all output coordinates."""
        out = np.zeros((sum(b.shape[0] for b in self.blocks),) * 2)
        off = 0
        for Q in self.blocks:
            d = Q.shape[0]
            out[off:off + d, off:off + d] = Q
            off += d
        return out


@dataclass(frozen=True)
class SchedulerState:
    """Last transmitted output vector; zero before the first transmission."""

    y_bar: np.ndarray

    @classmethod
    def initial(cls, m: int) -> "SchedulerState":
        return cls(np.zeros(m))


def make_weights(partition: NodePartition, blocks=None) -> WtodWeights:
    """Resolve a weight spec (None means identity) and check it against the partition."""
    if blocks is None:
        return WtodWeights.identity(partition)
    w = WtodWeights(tuple(np.asarray(b, dtype=float) for b in blocks))
    for node, Q in enumerate(w.blocks):
        if Q.shape[0] != partition.dims[node]:
            raise ValueError(f"weight block {node} does not match partition dim")
    # the stacked weight and every selector are block-diagonal on the same
    # partition, so they commute; the selection-form equivalence relies on it
    Qbar = w.full()
    for node in range(partition.node_count):
        Phi = selector_matrix(partition, node)
        assert np.array_equal(Qbar @ Phi, Phi @ Qbar)
    return w


def selector_matrix(partition: NodePartition, node: int) -> np.ndarray:
    """Diagonal 0/1 matrix picking node's coordinates of the output vector."""
    if not 0 <= node < partition.node_count:
        raise IndexError(f"node {node} out of range")
    diag = np.zeros(partition.total)
    diag[partition.block(node)] = 1.0
    return np.diag(diag)


def select_node(state: SchedulerState, y: np.ndarray,
                weights: WtodWeights, partition: NodePartition) -> int:
    """Node with the largest weighted deviation from its last transmitted value.

    Ties break to the smallest index.
    """
    best, best_val = 0, -np.inf
    for node in range(partition.node_count):
        blk = partition.block(node)
        d = y[blk] - state.y_bar[blk]
        val = float(d @ weights.blocks[node] @ d)
        if val > best_val:
            best, best_val = node, val
    return best


def update_transmitted(state: SchedulerState, y: np.ndarray, node: int,
                       partition: NodePartition) -> SchedulerState:
    """Overwrite the selected node's coordinates; everything else is held."""
    if not 0 <= node < partition.node_count:
        raise IndexError(f"node {node} out of range")
    y_bar = state.y_bar.copy()
    blk = partition.block(node)
    y_bar[blk] = y[blk]
    return SchedulerState(y_bar)
