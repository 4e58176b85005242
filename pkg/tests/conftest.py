import numpy as np
import pytest

from rgnpp.datagen import EventSequence
from rgnpp.embedding import EmbeddingConfig
from rgnpp.model import ModelConfig, RGNModel


@pytest.fixture
def small_model():
    cfg = ModelConfig(num_types=3, d_in=8, d_e=4, num_heads=2, num_gat_layers=2,
                      dropout_p=0.0, alpha=0.0)
    return RGNModel(cfg, EmbeddingConfig(8), seed=1)


@pytest.fixture
def tiny_seq():
    return EventSequence([(0.5, 0), (1.2, 2), (2.0, 1)], horizon=3.0)


def zero_params(model):
    for t in model.store.params.values():
        t.data[...] = 0.0
    return model
