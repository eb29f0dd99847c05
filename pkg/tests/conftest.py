import json
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from wtodest.augment import EstimatorGains
from wtodest.model import (Activation, DelaySpec, MjnnModel, ModeMatrices,
                           SectorBounds, TransitionSpec, completion_from_spec,
                           load_model_file, parse_gains)
from wtodest.protocol import NodePartition, make_weights
from wtodest.synthesis import CclConfig, ccl_synthesize

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def sec4():
    """The four-mode two-neuron benchmark model with its protocol setup."""
    bundle = load_model_file(str(FIXTURES / "paper_sec4.json"))
    partition = NodePartition(bundle.partition)
    weights = make_weights(partition, bundle.weights)
    completion = completion_from_spec(bundle.model.transitions)
    return SimpleNamespace(bundle=bundle, model=bundle.model,
                           partition=partition, weights=weights,
                           completion=completion)


@pytest.fixture(scope="session")
def paper_gains():
    with open(FIXTURES / "paper_sec4_gains.json") as fh:
        doc = json.load(fh)
    return EstimatorGains(parse_gains(doc["gains"]))


@pytest.fixture(scope="session")
def synthesized(sec4):
    """One shared synthesis run on the benchmark; several tests reuse it."""
    import time
    start = time.perf_counter()
    result = ccl_synthesize(sec4.model, sec4.partition, sec4.weights,
                            CclConfig(gamma=1.0))
    result.elapsed = time.perf_counter() - start
    return result
