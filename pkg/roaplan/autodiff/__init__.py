from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .fit import Normalizer, fit_regression
from .mlp import Layer, MlpParams, init_mlp, mlp_forward
from .optim import OptimizerState, rmsprop_step
from .tensor import (
    Tape, Tensor, absolute, as_tensor, atan2, clip, concat, cos, data_of, exp, is_tensor,
    log, norm, relu, sin, sqrt, stack, tanh, value_and_grad, where,
)


def grad(params, loss_fn):
    """Gradiente de loss_fn(params) em relação a cada tensor de params.parameters()"""
    leaves = params.parameters() if isinstance(params, MlpParams) else list(params)
    return value_and_grad(lambda: loss_fn(params), leaves)[1]
