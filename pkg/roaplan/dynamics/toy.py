"""
Sistemas de brinquedo com resposta conhecida, usados nos testes e no perfil desk.
"""

import numpy as np

from ..autodiff.tensor import concat
from .hybrid import HybridSystem, JumpEdge, ModeSpec


def _setpoint(p, n):
    """x*(p) = (p₀, 0, ..., 0); aceita ndarray ou Tensor"""
    if n == 1:
        return p[:, :1] * 1.0
    return concat([p[:, :1], np.zeros((p.shape[0], n - 1))], axis=1)


def _shift(x, p):
    return x - _setpoint(p, x.shape[1])


def linear_mode(name, a_matrix, b_matrix, control_bound=5.0, setpoint_range=1.0, sample_radius=1.0):
    """ẋ = A(x − x*(p)) + B u, configuração p = posição de equilíbrio da 1ª coordenada"""
    a_matrix = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    b_matrix = np.atleast_2d(np.asarray(b_matrix, dtype=float))
    n, m = b_matrix.shape

    def flow(x, u, p):
        return _shift(x, p) @ a_matrix.T + u @ b_matrix.T

    return ModeSpec(
        name=name, state_dim=n, control_dim=m, config_dim=1,
        equilibrium=lambda p: _setpoint(p, n),
        control_low=-control_bound * np.ones(m), control_high=control_bound * np.ones(m),
        config_low=[-setpoint_range], config_high=[setpoint_range],
        sample_low=-sample_radius * np.ones(n), sample_high=sample_radius * np.ones(n),
        flow=flow,
        nominal_control=lambda p: np.zeros((len(p), m)),
    )


def scalar_linear_mode(control_bound=5.0, sample_radius=2.0):
    """ẋ = −(x − p) + u"""
    return linear_mode("scalar-linear", [[-1.0]], [[1.0]], control_bound, sample_radius=sample_radius)


def cubic_mode(control_bound=1.0, sample_radius=2.0):
    """ẋ = −(x − p) + (x − p)³ + u; com u = 0 a região de atração é |x − p| < 1"""

    def flow(x, u, p):
        e = x - p[:, :1]
        return -e + e ** 3 + u

    return ModeSpec(
        name="cubic", state_dim=1, control_dim=1, config_dim=1,
        equilibrium=lambda p: _setpoint(p, 1),
        control_low=[-control_bound], control_high=[control_bound],
        config_low=[-1.0], config_high=[1.0],
        sample_low=[-sample_radius], sample_high=[sample_radius],
        flow=flow,
        nominal_control=lambda p: np.zeros((len(p), 1)),
        valid=lambda x, p: np.abs(x[:, 0] - np.asarray(p)[:, 0]) < 1e3,
    )


def planar_mode(control_bound=5.0):
    """Oscilador amortecido com atuação na velocidade"""
    return linear_mode("planar", [[0.0, 1.0], [-1.0, -0.5]], [[0.0], [1.0]], control_bound)


def setpoint_jump(x, u, p_i, p_j):
    """Salto decomponível em coordenadas de erro: e' = e + p_i − p_j"""
    return x + p_i[:, :1] - p_j[:, :1]


def setpoint_system(mode=None, dt=0.05):
    """
    Dois modos com a mesma dinâmica em coordenadas de erro; a troca muda o
    setpoint. O estado é o erro e = x − p, então x*(p) = 0 para ambos.
    """
    base = mode or scalar_linear_mode()

    def error_flow(x, u, p):
        return base.flow(x + p[:, :1], u, p)

    def error_mode(name):
        return ModeSpec(
            name=name, state_dim=1, control_dim=1, config_dim=1,
            equilibrium=lambda p: np.zeros((len(p), 1)),
            control_low=base.control_low, control_high=base.control_high,
            config_low=base.config_low, config_high=base.config_high,
            sample_low=base.sample_low, sample_high=base.sample_high,
            flow=error_flow, nominal_control=base.nominal_control,
        )

    modes = {"a": error_mode("a"), "b": error_mode("b")}
    never = lambda x_prev, x, p, clock: np.zeros(len(x), dtype=bool)
    edges = [JumpEdge("a", "b", never, setpoint_jump), JumpEdge("b", "a", never, setpoint_jump)]
    return HybridSystem(modes, edges, dt=dt)
