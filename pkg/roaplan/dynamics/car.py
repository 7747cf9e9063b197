"""
Carro single-track em coordenadas de erro em relação a um ponto de referência que
percorre o segmento s → w com velocidade v_ref.

Estado (x_e, y_e, δ, v_e, ψ_e, ψ̇_e, β), controle (aceleração, taxa de esterçamento),
configuração p = (s_x, s_y, w_x, w_y, v_ref, μ).
"""

from dataclasses import dataclass

import numpy as np

from ..autodiff.tensor import atan2, cos, data_of, norm, sin, stack
from ..exceptions import LowSpeedSingularityError
from . import constants
from .hybrid import HybridSystem, JumpEdge, ModeSpec, newton_nominal_control

STATE_DIM = 7
CONFIG_DIM = 6


@dataclass(frozen=True)
class CarParams:
    mass: float = constants.CAR_MASS
    yaw_inertia: float = constants.CAR_YAW_INERTIA
    lf: float = constants.CAR_LF
    lr: float = constants.CAR_LR
    csf: float = constants.CAR_CSF
    csr: float = constants.CAR_CSR
    g: float = constants.GRAVITY
    min_speed: float = constants.CAR_MIN_SPEED
    max_accel: float = 6.0
    max_steer_rate: float = 1.5
    lane_half_width: float = 3.0

    @property
    def wheelbase(self):
        return self.lf + self.lr


def car_coeffs(params, mu, v):
    """Coeficientes C1..C6 do modelo de deriva; v é a velocidade absoluta"""
    if np.any(data_of(v) <= params.min_speed):
        raise LowSpeedSingularityError(f"speed at or below {params.min_speed} m/s")
    m, iz, lf, lr, g = params.mass, params.yaw_inertia, params.lf, params.lr, params.g
    csf, csr, wb = params.csf, params.csr, params.wheelbase
    c1 = -mu * m / (v * iz * wb) * (lf ** 2 * csf * g * lr + lr ** 2 * csr * g * lf)
    c2 = mu * m / (iz * wb) * (lr * csr * g * lf - lf * csf * g * lr)
    c3 = mu * m / (iz * wb) * (lf * csf * g * lr)
    c4 = mu / (v ** 2 * wb) * (csr * g * lf * lr - csf * g * lr * lf) - 1.0
    c5 = -mu / (v * wb) * (csr * g * lf + csf * g * lr)
    c6 = mu / (v * wb) * (csf * g * lr)
    return c1, c2, c3, c4, c5, c6


def car_flow(x, u, p, params, omega_ref=0.0):
    xe, ye, delta, ve, psie, dpsie, beta = (x[:, k] for k in range(STATE_DIM))
    vref, mu = p[:, 4], p[:, 5]
    v = vref + ve
    c1, c2, c3, c4, c5, c6 = car_coeffs(params, mu, v)
    return stack([
        v * cos(psie) - vref + omega_ref * ye,
        v * sin(psie) - omega_ref * xe,
        u[:, 1],
        u[:, 0],
        dpsie,
        c1 * (dpsie + omega_ref) + c2 * beta + c3 * delta,
        c4 * (dpsie - omega_ref) + c5 * beta + c6 * delta,
    ], axis=1)


def heading(p):
    """Direção do segmento s → w"""
    return atan2(p[:, 3] - p[:, 1], p[:, 2] - p[:, 0])


def segment_length(p):
    return norm(p[:, 2:4] - p[:, 0:2], axis=1)


def car_jump(x, p_i, p_j):
    """
    Troca de segmento: gira o erro de posição por −Δφ, subtrai Δφ do erro de
    rumo e desloca o erro de velocidade para a nova referência.
    """
    diff = heading(p_j) - heading(p_i)
    dphi = atan2(sin(diff), cos(diff))
    c, s = cos(dphi), sin(dphi)
    xe, ye = x[:, 0], x[:, 1]
    return stack([
        c * xe + s * ye,
        -s * xe + c * ye,
        x[:, 2],
        x[:, 3] + p_i[:, 4] - p_j[:, 4],
        x[:, 4] - dphi,
        x[:, 5],
        x[:, 6],
    ], axis=1)


def clock_guard(x_prev, x, p, clock):
    """O ponto de referência alcançou o waypoint: τ·v_ref ≥ ‖w − s‖"""
    p = np.asarray(p, dtype=float)
    return clock * p[:, 4] >= segment_length(p)


def car_pose(x, p, clock):
    """Pose global (X, Y, rumo) a partir do erro e do relógio do modo"""
    x, p = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
    phi = heading(p)
    direction = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    ref = p[:, 0:2] + (clock * p[:, 4])[:, None] * direction
    offset_x = np.cos(phi) * x[:, 0] - np.sin(phi) * x[:, 1]
    offset_y = np.sin(phi) * x[:, 0] + np.cos(phi) * x[:, 1]
    return ref[:, 0] + offset_x, ref[:, 1] + offset_y, phi + x[:, 4]


def car_mode(mu, params=None, speed_range=(3.0, 10.0), name=None):
    params = params or CarParams()
    flow = lambda x, u, p: car_flow(x, u, p, params)

    def nominal(p):
        p = np.asarray(p, dtype=float)
        zeros = np.zeros((len(p), STATE_DIM))
        return newton_nominal_control(flow, zeros, p, np.zeros((len(p), 2)))

    def valid(x, p):
        x, p = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
        speed_ok = p[:, 4] + x[:, 3] > params.min_speed
        return speed_ok & (np.abs(x).max(axis=1) < 50.0)

    # segmento padrão de 30 m ao longo de +x para o treino por modo
    low = [0.0, 0.0, 30.0, 0.0, speed_range[0], mu]
    high = [0.0, 0.0, 30.0, 0.0, speed_range[1], mu]
    box = np.array([2.0, 2.0, 0.1, 2.0, 0.5, 0.5, 0.1])
    return ModeSpec(
        name=name or f"car-mu{mu:g}",
        state_dim=STATE_DIM, control_dim=2, config_dim=CONFIG_DIM,
        equilibrium=lambda p: np.zeros((len(p), STATE_DIM)),
        control_low=[-params.max_accel, -params.max_steer_rate],
        control_high=[params.max_accel, params.max_steer_rate],
        config_low=low, config_high=high,
        sample_low=-box, sample_high=box,
        flow=flow, nominal_control=nominal,
        features=lambda p: p[:, 4:6], feature_dim=2,
        valid=valid,
    )


def car_system(frictions=(1.0, 0.1), params=None, dt=0.01, speed_range=(3.0, 10.0)):
    params = params or CarParams()
    modes = {}
    for mu in frictions:
        mode = car_mode(mu, params, speed_range)
        modes[mode.name] = mode
    jump = lambda x, u, p_i, p_j: car_jump(x, p_i, p_j)
    edges = [JumpEdge(a, b, clock_guard, jump) for a in modes for b in modes]
    return HybridSystem(modes, edges, dt=dt)


def car_handover(x, p_i, p_j, excess):
    """
    Salto no instante em que a guarda dispara com o relógio excess segundos além
    do waypoint: o erro ao longo da pista volta a ser medido a partir do waypoint,
    passa pelo salto e desconta o trecho que a nova referência já percorreu.
    """
    p_i = np.asarray(p_i, dtype=float)
    along = np.zeros((1, STATE_DIM))
    along[0, 0] = 1.0
    shifted = np.asarray(x, dtype=float) + excess * p_i[:, 4:5] * along
    rows = p_j.shape[0]
    if shifted.shape[0] == 1 and rows > 1:
        shifted = np.repeat(shifted, rows, axis=0)
    return car_jump(shifted, p_i, p_j) - excess * p_j[:, 4:5] * along


def overshoot_time(p, clock):
    """Tempo do relógio além do fim do segmento"""
    p = np.asarray(p, dtype=float)
    return float(max(clock - segment_length(p)[0] / p[0, 4], 0.0))
