from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeError


@dataclass
class OptimizerState:
    """Acumuladores do RMSProp, um por tensor de parâmetro"""

    accumulators: list = field(default_factory=list)
    learning_rate: float = 1e-4
    decay: float = 0.99
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, learning_rate=1e-4, decay=0.99, epsilon=1e-8):
        return cls([np.zeros_like(p.data) for p in params], learning_rate, decay, epsilon)


def rmsprop_step(params, grads, state):
    """
    a ← decay·a + (1−decay)·g²;  θ ← θ − lr·g/(sqrt(a) + eps)

    Atualiza os tensores em params no lugar e devolve (params, state).
    """
    if len(params) != len(grads) or len(params) != len(state.accumulators):
        raise ShapeError(f"{len(params)} parameters, {len(grads)} gradients, {len(state.accumulators)} accumulators")
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=float)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient {i} has shape {g.shape}, parameter has {p.data.shape}")
        acc = state.decay * state.accumulators[i] + (1.0 - state.decay) * g ** 2
        state.accumulators[i] = acc
        p.data = p.data - state.learning_rate * g / (np.sqrt(acc) + state.epsilon)
    return params, state
