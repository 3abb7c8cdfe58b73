"""Shared fixtures."""
import logging

import numpy as np
import pytest
import torch
from hypothesis import settings

from models import LayerSpec, NeuronParams
from snn import SnnModel, init_weights

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def quiet_logging():
    logging.getLogger().setLevel(logging.WARNING)


@pytest.fixture
def tiny_model():
    """Two linear LIF layers on (2, 3, 3) inputs, float64, 3 classes."""
    torch.manual_seed(0)
    layers = [LayerSpec("linear", 18, 6), LayerSpec("linear", 6, 3)]
    model = SnnModel(layers, (2, 3, 3), 3).double()
    init_weights(model)
    with torch.no_grad():
        for op in model.ops:
            op.weight.mul_(3.0)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
