"""
Compass-gait com torque no quadril.

Estado (q1, q2, q̇1, q̇2): q1 é o ângulo da perna de apoio com a normal do chão,
q2 o ângulo entre as pernas no sentido em que o impacto ocorre em q2 + 2q1 = 0.
As matrizes D, C, G seguem a forma do manipulador indexada quadril-primeiro,
ξ = (−q2, q1), com B = (1, 0)ᵀ.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidDynamicsError
from . import constants
from .hybrid import ModeSpec, as_batch


@dataclass(frozen=True)
class WalkerParams:
    m: float = constants.WALKER_MASS
    l: float = constants.WALKER_LEG
    lc: float = constants.WALKER_COM
    inertia: float = constants.WALKER_INERTIA
    g0: float = constants.GRAVITY
    max_torque: float = 40.0


def walker_matrices(q1, q2, dq1, dq2, params):
    """
    D, C, G nas variáveis do modelo do manipulador: q2 aqui é o ângulo entre
    pernas no sentido do modelo (−q2 do estado). Lotes (B,).
    """
    m, l, lc, inertia, g0 = params.m, params.l, params.lc, params.inertia, params.g0
    c2, s2 = np.cos(q2), np.sin(q2)
    arm = m * l * (l - lc)
    d11 = (l - lc) ** 2 * m + inertia
    d12 = m * l * (l - lc) * c2 - (l - lc) ** 2 * m - inertia
    d22 = -2 * m * l * (l - lc) * c2 + (2 * (lc ** 2 + l ** 2) - 2 * lc * l) * m + 2 * inertia
    D = np.empty(q1.shape + (2, 2))
    D[..., 0, 0] = d11
    D[..., 0, 1] = d12
    D[..., 1, 0] = d12
    D[..., 1, 1] = d22
    C = np.zeros(q1.shape + (2, 2))
    C[..., 0, 1] = -arm * s2 * dq1
    C[..., 1, 0] = -arm * s2 * (dq2 - dq1)
    C[..., 1, 1] = -arm * s2 * dq2
    G = np.empty(q1.shape + (2,))
    G[..., 0] = m * g0 * np.sin(q2 - q1) * (l - lc)
    G[..., 1] = m * g0 * ((lc - l) * np.sin(q2 - q1) - np.sin(q1) * (lc + l))
    return D, C, G


def walker_flow(x, u, params):
    x = as_batch(x, 4)
    u = as_batch(u, 1)
    q1, q2, dq1, dq2 = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    D, C, G = walker_matrices(q1, -q2, dq1, -dq2, params)
    det = D[:, 0, 0] * D[:, 1, 1] - D[:, 0, 1] * D[:, 1, 0]
    if np.any(np.abs(det) < 1e-9):
        raise InvalidDynamicsError("singular walker mass matrix")
    xi_dot = np.stack([-dq2, dq1], axis=1)
    rhs = -np.einsum("bij,bj->bi", C, xi_dot) - G
    rhs[:, 0] += u[:, 0]
    xi_dd = np.linalg.solve(D, rhs[..., None])[..., 0]
    return np.stack([dq1, dq2, xi_dd[:, 1], -xi_dd[:, 0]], axis=1)


def walker_valid(x, p=None):
    x = as_batch(x, 4)
    return (np.abs(x[:, 0]) < 1.2) & (np.abs(x[:, 1]) < 2.5) & (np.abs(x[:, 2:]).max(axis=1) < 30.0)


def guard_value(x):
    x = np.asarray(x, dtype=float)
    return x[..., 1] + 2.0 * x[..., 0]


def walker_guard(x_prev, x, p=None, clock=None):
    """Impacto depois do meio da passada: q2 + 2q1 cruza zero vindo de cima"""
    x_prev, x = as_batch(x_prev, 4), as_batch(x, 4)
    return (x[:, 0] < 0.0) & (guard_value(x_prev) > 0.0) & (guard_value(x) <= 0.0)


def walker_relabel(q):
    """Troca de perna: q1' = q1 + q2, q2' = −q2"""
    q = np.asarray(q, dtype=float)
    return np.stack([q[..., 0] + q[..., 1], -q[..., 1]], axis=-1)


def walker_jump(x, params=None):
    """
    Impacto plástico do pé livre seguido da troca de perna. As velocidades saem
    do balanço de impulsos no modelo estendido (posição do pé de apoio livre) com
    o novo pé de apoio parado após o impacto.
    """
    params = params or WalkerParams()
    x = as_batch(x, 4)
    m, l, lc, inertia = params.m, params.l, params.lc, params.inertia
    a = x[:, 0]
    b = -x[:, 1] - x[:, 0]
    da = x[:, 2]
    db = -x[:, 3] - x[:, 2]
    batch = len(x)
    M = np.zeros((batch, 4, 4))
    M[:, 0, 0] = M[:, 1, 1] = 2 * m
    M[:, 0, 2] = M[:, 2, 0] = m * (lc + l) * np.cos(a)
    M[:, 1, 2] = M[:, 2, 1] = -m * (lc + l) * np.sin(a)
    M[:, 0, 3] = M[:, 3, 0] = m * (l - lc) * np.cos(b)
    M[:, 1, 3] = M[:, 3, 1] = m * (l - lc) * np.sin(b)
    M[:, 2, 2] = m * lc ** 2 + inertia + m * l ** 2
    M[:, 3, 3] = m * (l - lc) ** 2 + inertia
    M[:, 2, 3] = M[:, 3, 2] = m * l * (l - lc) * np.cos(a + b)
    E = np.zeros((batch, 2, 4))
    E[:, 0, 0] = E[:, 1, 1] = 1.0
    E[:, 0, 2] = l * np.cos(a)
    E[:, 1, 2] = -l * np.sin(a)
    E[:, 0, 3] = l * np.cos(b)
    E[:, 1, 3] = l * np.sin(b)
    K = np.zeros((batch, 6, 6))
    K[:, :4, :4] = M
    K[:, :4, 4:] = -np.swapaxes(E, 1, 2)
    K[:, 4:, :4] = E
    pre = np.stack([np.zeros(batch), np.zeros(batch), da, db], axis=1)
    rhs = np.zeros((batch, 6))
    rhs[:, :4] = np.einsum("bij,bj->bi", M, pre)
    post = np.linalg.solve(K, rhs[..., None])[..., 0]
    da_post, db_post = post[:, 2], post[:, 3]
    q = walker_relabel(x[:, :2])
    return np.stack([q[:, 0], q[:, 1], -db_post, da_post + db_post], axis=1)


def kinetic_energy(x, params=None):
    params = params or WalkerParams()
    x = as_batch(x, 4)
    D, _, _ = walker_matrices(x[:, 0], -x[:, 1], x[:, 2], -x[:, 3], params)
    xi_dot = np.stack([-x[:, 3], x[:, 2]], axis=1)
    return 0.5 * np.einsum("bi,bij,bj->b", xi_dot, D, xi_dot)


def walker_mode(params=None, q_ref_range=(0.04, 0.18)):
    """
    Modo de passada única. Configuração p = (q1_ref, correção de torque da
    passada); a guarda de impacto encerra o rollout.
    """
    params = params or WalkerParams()

    def equilibrium(p):
        # pós-impacto nominal da passada: q1 = q1_ref, q2 = −2 q1_ref
        p = np.asarray(p, dtype=float)
        out = np.zeros((len(p), 4))
        out[:, 0] = p[:, 0]
        out[:, 1] = -2.0 * p[:, 0]
        return out

    return ModeSpec(
        name="walker", state_dim=4, control_dim=1, config_dim=2,
        equilibrium=equilibrium,
        control_low=[-params.max_torque], control_high=[params.max_torque],
        config_low=[q_ref_range[0], 0.0], config_high=[q_ref_range[1], 0.0],
        sample_low=[-0.02, -0.04, -0.2, -0.4], sample_high=[0.02, 0.04, 0.2, 0.4],
        flow=lambda x, u, p: walker_flow(x, u, params),
        features=lambda p: p[:, :1], feature_dim=1,
        valid=walker_valid, exit_guard=walker_guard, anchored=False,
    )
