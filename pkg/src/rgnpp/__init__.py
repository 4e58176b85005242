"""Recurrent graph networks for marked temporal point processes."""

from .autodiff import ParamStore, Tensor, adam_step, grad_check, no_grad
from .datagen import (EventSequence, HawkesSpec, derive_seeds, load_dataset,
                      oracle_loglik, sample_hawkes, sample_poisson, save_dataset,
                      split_dataset)
from .embedding import EmbeddingConfig, embed_time
from .model import ModelConfig, NodeState, RGNModel, StepOutput
from .objectives import LossBreakdown, MCIntegralConfig
from .training import TrainConfig, train

__all__ = [
    "Tensor", "ParamStore", "adam_step", "grad_check", "no_grad",
    "EventSequence", "HawkesSpec", "sample_poisson", "sample_hawkes",
    "oracle_loglik", "load_dataset", "save_dataset", "derive_seeds",
    "split_dataset",
    "EmbeddingConfig", "embed_time",
    "ModelConfig", "NodeState", "RGNModel", "StepOutput",
    "MCIntegralConfig", "LossBreakdown",
    "TrainConfig", "train",
]
