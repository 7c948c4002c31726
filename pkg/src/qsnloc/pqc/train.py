"""Mini-batch Adam training of hybrid PQC models."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..data import Dataset
from ..errors import EmptyBatch
from .model import CLASSIFIER, PqcModel, init_model, loss_and_gradients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 32
    learning_rate: float = 1e-2
    blocks: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    model: PqcModel
    history: list[float]  # mean training loss per epoch


def fit(model: PqcModel, dataset: Dataset, config: TrainConfig, rng: np.random.Generator,
        progress=None) -> TrainResult:
    """Train ``model`` in place of a copy; returns the final-epoch model and per-epoch losses."""
    n = len(dataset)
    if n == 0:
        raise EmptyBatch("cannot train on an empty dataset")
    params = model.parameters()
    opt = Adam(params.size, config.learning_rate, config.beta1, config.beta2, config.eps)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            value, grad = loss_and_gradients(model, dataset.subset(idx))
            total += value * len(idx)
            if config.learning_rate != 0.0:
                params = opt.step(params, grad)
                model = model.with_parameters(params)
        history.append(total / n)
        log.debug("epoch %d loss %.6f", epoch + 1, history[-1])
        if progress is not None:
            progress(epoch + 1, history[-1])
    return TrainResult(model, history)


def train(config: TrainConfig, dataset: Dataset, rng: np.random.Generator, kind: str = CLASSIFIER,
          label_points=None, label_cells=None, progress=None) -> TrainResult:
    """Initialize a ring-PQC model for ``dataset`` and train it with Adam."""
    model = init_model(dataset.qubits, kind, dataset.n_classes, dataset.domain, rng, config.blocks,
                       label_points, label_cells)
    return fit(model, dataset, config, rng, progress)
