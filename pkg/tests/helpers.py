"""Shared builders for randomized and toy models used across the tests."""

import numpy as np

from wtodest.model import (Activation, DelaySpec, MjnnModel, ModeMatrices,
                           SectorBounds, TransitionSpec)
from wtodest.protocol import NodePartition


def random_model(rng, N=2, n=2, m=2, r=1, q=1, spectral=0.5, masked=False):
    """Random well-posed model; contraction-scaled A keeps trajectories tame."""
    modes = []
    for _ in range(N):
        A = rng.standard_normal((n, n))
        A *= spectral / max(np.abs(np.linalg.eigvals(A)).max(), 1e-6)
        modes.append(ModeMatrices(
            A=A,
            B=0.1 * rng.standard_normal((n, n)),
            C=0.1 * rng.standard_normal((n, n)),
            D1=0.1 * rng.standard_normal((n, r)),
            D2=0.1 * rng.standard_normal((m, r)),
            E=rng.standard_normal((m, n)),
            M=rng.standard_normal((q, n)),
        ))
    probs = rng.random((N, N)) + 0.1
    probs /= probs.sum(axis=1, keepdims=True)
    if masked:
        # hide one off-diagonal entry per row (and its mass stays implicit)
        for i in range(N):
            probs[i, (i + 1) % N] = np.nan
    scales = rng.uniform(0.1, 1.0, n)
    return MjnnModel(
        modes=tuple(modes),
        transitions=TransitionSpec(probs),
        sector=SectorBounds(F1=np.zeros((n, n)), F2=np.diag(scales)),
        delay=DelaySpec(1, 3),
        activation=Activation(kind="tanh", scales=scales),
    )


def random_partition(rng, m):
    """Random contiguous partition of m output coordinates."""
    cuts = sorted(rng.choice(np.arange(1, m), size=rng.integers(0, m), replace=False))
    edges = [0] + list(cuts) + [m]
    return NodePartition(tuple(int(b - a) for a, b in zip(edges, edges[1:])))


def unstable_toy(a=1.5, observable=True):
    """Scalar open-loop-unstable mode; unobservable variant defeats any gain."""
    E = np.eye(1) if observable else np.zeros((1, 1))
    mm = ModeMatrices(A=np.array([[a]]), B=np.zeros((1, 1)), C=np.zeros((1, 1)),
                      D1=np.zeros((1, 1)), D2=np.zeros((1, 1)), E=E,
                      M=np.eye(1))
    return MjnnModel(
        modes=(mm,),
        transitions=TransitionSpec(np.array([[1.0]])),
        sector=SectorBounds(F1=np.zeros((1, 1)), F2=0.5 * np.eye(1)),
        delay=DelaySpec(1, 1),
        activation=Activation(kind="tanh", scales=np.array([1.0])),
    )
