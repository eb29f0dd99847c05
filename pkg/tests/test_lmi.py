import numpy as np
import pytest

from helpers import random_model
from wtodest.augment import EstimatorGains
from wtodest.lmi import (LmiProblem, RequiresFullTPError,
                         assemble_analysis_known, assemble_analysis_partial,
                         assemble_performance, certified_quadratic,
                         schur_embed, sector_multiplier_blocks)
from wtodest.model import SectorBounds
from wtodest.protocol import NodePartition, make_weights
from wtodest.sdp import solve_feasibility


def _rand_spd(rng, n):
    Q = rng.standard_normal((n, n))
    return Q @ Q.T + 0.5 * np.eye(n)


def test_schur_embed_matches_complement():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n1, n2 = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        A1 = rng.standard_normal((n1, n1)); A1 = 0.5 * (A1 + A1.T)
        A2 = _rand_spd(rng, n2)
        A3 = rng.standard_normal((n2, n1))
        block = schur_embed(A1, A2, A3)
        block_neg = np.linalg.eigvalsh(block).max() < 0
        comp = A1 + A3.T @ np.linalg.solve(A2, A3)
        comp_neg = np.linalg.eigvalsh(comp).max() < 0
        assert block_neg == comp_neg


def test_schur_embed_shape_check():
    with pytest.raises(ValueError):
        schur_embed(np.eye(2), np.eye(3), np.zeros((2, 2)))


def test_sector_multiplier_blocks_structure():
    sector = SectorBounds(0.1 * np.eye(2), np.diag([0.3, 0.4]))
    F3, F4 = sector_multiplier_blocks(sector)
    assert F3.shape == (4, 4) and F4.shape == (4, 4)
    assert np.allclose(F3, F3.T)
    base3 = 0.5 * (sector.F1.T @ sector.F2 + sector.F1 @ sector.F2.T)
    assert np.allclose(F3[:2, :2], base3) and np.allclose(F3[2:, 2:], base3)
    assert not F3[:2, 2:].any()


def test_lmi_problem_residual_replay():
    prob = LmiProblem(eps=1e-7)
    X = prob.add_sym("X", 2, lower=1.0)
    prob.add_neg_def("cap", X - 3.0 * np.eye(2))
    prob.load_assignment({"X": 2.0 * np.eye(2)})
    res = prob.constraint_residuals()
    assert res["X:lb"] <= 0 and res["cap"] <= 1e-6
    prob.load_assignment({"X": 5.0 * np.eye(2)})
    assert prob.constraint_residuals()["cap"] > 1.0


def test_assembly_counts_and_shapes(sec4, paper_gains):
    prob = assemble_performance(sec4.model, sec4.partition, sec4.weights,
                                paper_gains, gamma=1.0)
    names = [name for name, _ in prob.constraints]
    # fully known rows: one averaged vertex per (mode, node, next-node)
    assert sum(name.startswith("stab_") for name in names) == 4 * 2 * 2
    assert sum(name.startswith("peak_") for name in names) == 4 * 2
    # P blocks per pair, shared Z, two sector multipliers and one scheduling
    # multiplier per (mode, node, other-node)
    assert "Z" in prob.specs and prob.specs["Z"].shape == (8, 8)
    assert sum(name.startswith("sigma_") for name in prob.specs) == 4 * 2 * 1


def test_known_assembly_rejects_masked_grid():
    rng = np.random.default_rng(1)
    model = random_model(rng, masked=True)
    partition = NodePartition((model.m,))
    weights = make_weights(partition, None)
    gains = EstimatorGains.zeros(model, partition)
    with pytest.raises(RequiresFullTPError):
        assemble_analysis_known(model, partition, weights, gains)
    # the masked-grid assembly accepts it
    prob = assemble_analysis_partial(model, partition, weights, gains)
    labels = {name.rsplit("_", 1)[-1] for name, _ in prob.constraints
              if name.startswith("stab_")}
    assert "K" in labels and any(lab.startswith("U") for lab in labels)


def test_certificate_replay_is_negative_definite(sec4, paper_gains):
    outcome = solve_feasibility(
        assemble_performance(sec4.model, sec4.partition, sec4.weights,
                             paper_gains, gamma=2.0))
    assert outcome.feasible
    # plain-numpy Schur complement of each stability block must be negative
    for i in range(sec4.model.N):
        for m in range(sec4.partition.node_count):
            for mn in range(sec4.partition.node_count):
                Omega = certified_quadratic(sec4.model, sec4.partition,
                                            sec4.weights, paper_gains,
                                            outcome.assignment, i, m, mn)
                assert np.linalg.eigvalsh(Omega).max() < 1e-5
