import logging
from dataclasses import dataclass

import numpy as np

from .mlp import mlp_forward
from .optim import OptimizerState, rmsprop_step
from .tensor import value_and_grad

logger = logging.getLogger(__name__)


@dataclass
class Normalizer:
    """Padronização afim (x − média)/desvio; desvio nulo vira 1"""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data):
        data = np.asarray(data, dtype=float)
        std = data.std(axis=0)
        return cls(data.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, x):
        return (x - self.mean) / self.std

    def invert(self, y):
        return y * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, payload):
        return cls(np.asarray(payload["mean"], dtype=float), np.asarray(payload["std"], dtype=float))


def fit_regression(net, inputs, targets, iterations, learning_rate, rng, batch_size=None, lr_final=None):
    """
    Regressão MSE com RMSProp. Com lr_final a taxa decai geometricamente de
    learning_rate até lr_final ao longo das iterações. Devolve o histórico de perdas.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(len(inputs), -1)
    params = net.parameters()
    state = OptimizerState.for_params(params, learning_rate)
    n = len(inputs)
    history = []
    for it in range(int(iterations)):
        if lr_final:
            frac = it / max(int(iterations) - 1, 1)
            state.learning_rate = learning_rate * (lr_final / learning_rate) ** frac
        if batch_size and batch_size < n:
            idx = rng.choice(n, size=batch_size, replace=False)
            xb, yb = inputs[idx], targets[idx]
        else:
            xb, yb = inputs, targets
        loss, grads = value_and_grad(lambda: ((mlp_forward(net, xb) - yb) ** 2).mean(), params)
        rmsprop_step(params, grads, state)
        history.append(loss)
    if history:
        logger.debug("regression finished: %d iterations, final loss %.3e", len(history), history[-1])
    return history
