import math

import numpy as np
import pytest

from helpers import random_model
from wtodest.model import (Activation, DelaySpec, MjnnModel, ModeMatrices,
                           ModelValidationError, SectorBounds, TransitionSpec,
                           TransitionCompletion, completion_from_spec,
                           dump_gains, known_index_sets, model_violations,
                           parse_gains, sample_delay, sample_next_mode,
                           sector_residual, validate_model)


def test_fixture_loads_benchmark_values(sec4):
    model = sec4.model
    assert model.N == 4 and model.n == 2 and model.m == 2
    assert np.allclose(model.modes[0].A, [[0.27, 0.0], [0.0, 0.63]])
    assert np.allclose(model.modes[1].A, [[0.32, 0.0], [0.16, 0.47]])
    assert np.allclose(model.modes[3].E, [[-0.20, 0.15], [0.10, 0.20]])
    assert model.transitions.fully_known
    assert np.allclose(model.transitions.probs.sum(axis=1), 1.0)
    assert model.delay.tau_min == 1 and model.delay.tau_max == 3
    assert model_violations(model) == []


def test_random_models_validate():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert model_violations(random_model(rng)) == []


def _toy(**overrides):
    base = dict(
        modes=(ModeMatrices(A=np.eye(2) * 0.5, B=np.zeros((2, 2)),
                            C=np.zeros((2, 2)), D1=np.zeros((2, 1)),
                            D2=np.zeros((2, 1)), E=np.eye(2), M=np.eye(2)),),
        transitions=TransitionSpec(np.array([[1.0]])),
        sector=SectorBounds(np.zeros((2, 2)), np.eye(2)),
        delay=DelaySpec(1, 2),
        activation=Activation(scales=np.ones(2)),
    )
    base.update(overrides)
    return MjnnModel(**base)


def test_row_sum_violation_detected():
    model = _toy(transitions=TransitionSpec(np.array([[0.7]])))
    kinds = {v.kind for v in model_violations(model)}
    assert "RowSumViolation" in kinds
    with pytest.raises(ModelValidationError):
        validate_model(model)


def test_delay_order_violation_detected():
    model = _toy(delay=DelaySpec(3, 1))
    assert {v.kind for v in model_violations(model)} == {"DelayOrderViolation"}
    model = _toy(delay=DelaySpec(0, 2))
    assert {v.kind for v in model_violations(model)} == {"DelayOrderViolation"}


def test_dimension_mismatch_detected():
    bad = ModeMatrices(A=np.eye(3), B=np.zeros((2, 2)), C=np.zeros((2, 2)),
                       D1=np.zeros((2, 1)), D2=np.zeros((2, 1)),
                       E=np.eye(2), M=np.eye(2))
    model = _toy(modes=(bad,))
    assert any(v.kind == "DimensionMismatch" for v in model_violations(model))


def test_known_index_sets_partition_row():
    spec = TransitionSpec(np.array([[0.3, math.nan, 0.2],
                                    [0.1, 0.6, 0.3],
                                    [math.nan, math.nan, math.nan]]))
    known, unknown, mass = known_index_sets(spec, 0)
    assert known == (0, 2) and unknown == (1,)
    assert mass == pytest.approx(0.5)
    known, unknown, mass = known_index_sets(spec, 1)
    assert unknown == () and mass == pytest.approx(1.0)
    known, unknown, mass = known_index_sets(spec, 2)
    assert known == () and mass == 0.0


def test_sample_next_mode_inverse_cdf_edges():
    comp = TransitionCompletion(np.array([[0.25, 0.5, 0.25]] * 3))
    assert sample_next_mode(comp, 0, 0.0) == 0
    assert sample_next_mode(comp, 0, 0.2499) == 0
    assert sample_next_mode(comp, 0, 0.25) == 1
    assert sample_next_mode(comp, 0, 0.7499) == 1
    assert sample_next_mode(comp, 0, 0.75) == 2
    assert sample_next_mode(comp, 0, 0.999999) == 2


def test_sample_delay_bounds_and_uniformity():
    spec = DelaySpec(2, 5)
    rng = np.random.default_rng(1)
    draws = np.array([sample_delay(spec, u) for u in rng.random(20000)])
    assert draws.min() == 2 and draws.max() == 5
    freqs = np.bincount(draws, minlength=6)[2:] / draws.size
    assert np.abs(freqs - 0.25).max() < 0.02


def test_sector_residual_valid_bounds():
    # f(x) = tanh(c x) sits in the sector [0, diag(c)] componentwise
    rng = np.random.default_rng(2)
    scales = np.array([0.03, 0.02])
    sector = SectorBounds(np.zeros((2, 2)), np.diag(scales))
    for _ in range(1000):
        x = rng.uniform(-50, 50, 2)
        fx = np.tanh(scales * x)
        assert sector_residual(sector, x, fx) <= 1e-12


def test_sector_residual_flags_violations():
    # bounds that cross the function detect a violation somewhere
    sector = SectorBounds(0.2 * np.eye(1), 0.3 * np.eye(1))
    x = np.array([10.0])
    fx = np.tanh(0.03 * x)  # well below the claimed lower slope at x = 10
    assert sector_residual(sector, x, fx) > 0


def test_gain_grid_round_trip():
    rng = np.random.default_rng(3)
    gains = {(i, m): rng.standard_normal((4, 2)) for i in range(3) for m in range(2)}
    doc = dump_gains(gains)
    assert set(doc) == {f"{i + 1},{m + 1}" for i in range(3) for m in range(2)}
    back = parse_gains(doc)
    for key, K in gains.items():
        assert np.allclose(back[key], K)


def test_completion_requires_fully_known_grid():
    spec = TransitionSpec(np.array([[0.5, math.nan], [0.5, 0.5]]))
    with pytest.raises(ValueError):
        completion_from_spec(spec)
    comp = TransitionCompletion(np.array([[0.5, 0.5], [0.5, 0.5]]))
    comp.check_against(spec)  # known cells agree
    with pytest.raises(ValueError):
        TransitionCompletion(np.array([[0.5, 0.4], [0.5, 0.5]]))
    with pytest.raises(ValueError):
        comp2 = TransitionCompletion(np.array([[0.6, 0.4], [0.5, 0.5]]))
        comp2.check_against(spec)
