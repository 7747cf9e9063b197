from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeError
from .tensor import Tensor, relu, tanh

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class Layer:
    weight: Tensor  # (saída, entrada)
    bias: Tensor
    activation: str = "relu"

    @property
    def rows(self):
        return self.weight.shape[0]

    @property
    def cols(self):
        return self.weight.shape[1]


@dataclass
class MlpParams:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("an MLP needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ShapeError(f"layer {i}: unknown activation '{layer.activation}'")
            if layer.weight.ndim != 2 or layer.bias.shape != (layer.rows,):
                raise ShapeError(f"layer {i}: weight {layer.weight.shape} and bias {layer.bias.shape} disagree")
            if i and layer.cols != self.layers[i - 1].rows:
                raise ShapeError(
                    f"layer {i}: expects {layer.cols} inputs, previous layer gives {self.layers[i - 1].rows}")

    @property
    def input_dim(self):
        return self.layers[0].cols

    @property
    def output_dim(self):
        return self.layers[-1].rows

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def copy(self):
        return MlpParams([
            Layer(Tensor(l.weight.data, requires_grad=True), Tensor(l.bias.data, requires_grad=True), l.activation)
            for l in self.layers
        ])


def init_mlp(input_dim, output_dim, hidden=(256, 256), rng=None, activation="relu", out_activation="identity"):
    """Pesos e vieses uniformes em ±sqrt(1/fan_in)"""
    rng = rng if rng is not None else np.random.default_rng(0)
    sizes = [int(input_dim), *[int(h) for h in hidden], int(output_dim)]
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        bound = np.sqrt(1.0 / fan_in)
        act = out_activation if i == len(sizes) - 2 else activation
        layers.append(Layer(
            Tensor(rng.uniform(-bound, bound, size=(fan_out, fan_in)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, size=fan_out), requires_grad=True),
            act,
        ))
    return MlpParams(layers)


def activate(h, name):
    if name == "relu":
        return relu(h)
    if name == "tanh":
        return tanh(h)
    return h


def mlp_forward(params, x, final_activation=True):
    """
    Avalia a rede em x de forma (d,) ou (B, d), array ou Tensor.
    final_activation=False devolve a pré-ativação da última camada.
    """
    if x.shape[-1] != params.input_dim or x.ndim not in (1, 2):
        raise ShapeError(f"MLP expects inputs (B, {params.input_dim}), got {tuple(x.shape)}")
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        h = h @ layer.weight.T + layer.bias
        if i < last or final_activation:
            h = activate(h, layer.activation)
    return h.reshape(-1) if single else h
