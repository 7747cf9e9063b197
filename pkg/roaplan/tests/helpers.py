"""Redes montadas à mão para os testes: saída constante e certificados V = escala·‖x − x*‖"""

import numpy as np

from roaplan.autodiff import Layer, MlpParams, Normalizer, Tensor
from roaplan.certificates import LyapunovNet
from roaplan.roa import RoAEstimator


def constant_net(input_dim, output):
    output = np.asarray(output, dtype=float).ravel()
    return MlpParams([Layer(Tensor(np.zeros((len(output), input_dim))), Tensor(output.copy()), "identity")])


def norm_certificate(mode, scale=1.0):
    """P ≡ scale·I e V_NN ≡ 0"""
    n, k = mode.state_dim, mode.n_features
    return LyapunovNet(constant_net(k, scale * np.eye(n)), constant_net(n + k, [0.0]), mode)


def constant_roa(mode, level):
    return RoAEstimator(constant_net(mode.n_features, [level]), Normalizer.identity(mode.n_features), 1.0)


def zero_controller(x, p):
    return np.zeros((len(x), 1))
