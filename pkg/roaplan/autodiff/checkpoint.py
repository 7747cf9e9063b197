"""
Checkpoints de rede em JSON legível.

{format_version, net_role, input_dim, output_dim, meta,
 layers: [{rows, cols, activation, weights, bias}]}
Os reais são escritos com repr (ida e volta exata).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import MissingArtifactError, ShapeError
from .mlp import Layer, MlpParams
from .tensor import Tensor

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: MlpParams
    net_role: str
    meta: dict = field(default_factory=dict)


def checkpoint_dict(params, net_role, meta=None):
    return {
        "format_version": FORMAT_VERSION,
        "net_role": net_role,
        "input_dim": params.input_dim,
        "output_dim": params.output_dim,
        "meta": meta or {},
        "layers": [
            {
                "rows": layer.rows,
                "cols": layer.cols,
                "activation": layer.activation,
                "weights": layer.weight.data.tolist(),
                "bias": layer.bias.data.tolist(),
            }
            for layer in params.layers
        ],
    }


def save_checkpoint(params, path, net_role, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_dict(params, net_role, meta), indent=1))
    return path


def params_from_dict(payload):
    if payload.get("format_version") != FORMAT_VERSION:
        raise ShapeError(f"unsupported checkpoint format_version {payload.get('format_version')!r}")
    layers = []
    for i, entry in enumerate(payload["layers"]):
        weights = np.asarray(entry["weights"], dtype=float)
        bias = np.asarray(entry["bias"], dtype=float)
        if weights.shape != (entry["rows"], entry["cols"]) or bias.shape != (entry["rows"],):
            raise ShapeError(f"checkpoint layer {i}: declared {entry['rows']}x{entry['cols']}, found {weights.shape}")
        layers.append(Layer(Tensor(weights, requires_grad=True), Tensor(bias, requires_grad=True), entry["activation"]))
    params = MlpParams(layers)
    if params.input_dim != payload["input_dim"] or params.output_dim != payload["output_dim"]:
        raise ShapeError("checkpoint input_dim/output_dim disagree with its layers")
    return params


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, "checkpoint")
    payload = json.loads(path.read_text())
    return Checkpoint(params_from_dict(payload), payload["net_role"], payload.get("meta", {}))
