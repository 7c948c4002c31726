"""Parameterized-circuit localization: simulator, hybrid model, training, schemes."""
from .circuit import CircuitSpec, Gate, apply_circuit, ring_circuit, u3_matrix, z_expectations
from .localize import pqc_one, pqc_two
from .model import CLASSIFIER, REGRESSION, LinearHead, PqcModel, forward, gradients, loss
from .train import Adam, TrainConfig, train

__all__ = [
    "CircuitSpec", "Gate", "apply_circuit", "ring_circuit", "u3_matrix", "z_expectations",
    "pqc_one", "pqc_two", "CLASSIFIER", "REGRESSION", "LinearHead", "PqcModel", "forward",
    "gradients", "loss", "Adam", "TrainConfig", "train",
]
