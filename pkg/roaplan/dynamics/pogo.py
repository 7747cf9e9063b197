"""
Pogobot: massa pontual com perna-mola sem massa, por unidade de massa.

Estado (x, ẋ, y, ẏ). Em voo a dinâmica é balística; na fase de apoio a mola
empurra ao longo da perna, do pé fixo (x_f, y_f) até a cabeça.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError, SingularLegError
from . import constants
from .hybrid import Event, as_batch

logger = logging.getLogger(__name__)

FLIGHT = "flight"
STANCE = "stance"


@dataclass(frozen=True)
class PogoParams:
    g: float = constants.GRAVITY
    l0: float = constants.POGO_REST_LENGTH
    k: float = constants.POGO_STIFFNESS
    max_force: float = 10.0
    max_angle: float = 0.6

    def __post_init__(self):
        if self.l0 <= 0:
            raise ConfigError("pogo.l0", "rest leg length must be positive")
        if self.k <= 0:
            raise ConfigError("pogo.k", "spring constant must be positive")


def pogo_flow(x, phase, foot, params, u=None):
    x = as_batch(x, 4)
    out = np.empty_like(x)
    out[:, 0] = x[:, 1]
    out[:, 2] = x[:, 3]
    if phase == FLIGHT:
        out[:, 1] = 0.0
        out[:, 3] = -params.g
        return out
    force = np.zeros(len(x)) if u is None else as_batch(u)[:, 0]
    foot = np.broadcast_to(np.asarray(foot, dtype=float), (len(x), 2))
    dx = x[:, 0] - foot[:, 0]
    dy = x[:, 2] - foot[:, 1]
    length = np.hypot(dx, dy)
    if np.any(length < 1e-9):
        raise SingularLegError("leg length collapsed to zero")
    # spring force along the leg is k(l0 - L): positive (outward) while compressed
    push = (params.k * (params.l0 - length) + force) / length
    out[:, 1] = push * dx
    out[:, 3] = push * dy - params.g
    return out


def foot_point(x, theta, params):
    return np.array([x[0] + params.l0 * np.sin(theta), x[2] - params.l0 * np.cos(theta)])


def leg_length(x, foot):
    return float(np.hypot(x[0] - foot[0], x[2] - foot[1]))


def _crossing(before, after):
    """Fração s ∈ [0, 1] em que uma função linear vai de before a after e cruza zero"""
    if before == after:
        return 1.0
    return float(np.clip(before / (before - after), 0.0, 1.0))


def touchdown_fraction(prev, nxt, theta, params, floor):
    if nxt[3] >= 0.0:
        return None
    g_prev = prev[2] - params.l0 * np.cos(theta) - floor
    g_next = nxt[2] - params.l0 * np.cos(theta) - floor
    if g_prev > 0.0 >= g_next:
        return _crossing(g_prev, g_next)
    return None


def liftoff_fraction(prev, nxt, foot, params):
    l_prev, l_next = leg_length(prev, foot), leg_length(nxt, foot)
    if l_next >= params.l0 and l_next > l_prev:
        return _crossing(l_prev - params.l0, l_next - params.l0)
    return None


def apex_fraction(prev, nxt):
    if prev[3] > 0.0 >= nxt[3]:
        return _crossing(prev[3], nxt[3])
    return None


def pogo_events(times, states, phases, feet=None, params=None, theta=0.0, floor=0.0):
    """
    Eventos (touchdown, liftoff, apex) de um fluxo de estados gravado, com o
    instante interpolado linearmente dentro do passo.
    """
    params = params or PogoParams()
    events = []
    for i in range(1, len(times)):
        prev, nxt = np.asarray(states[i - 1]), np.asarray(states[i])
        dt = times[i] - times[i - 1]
        if phases[i - 1] == FLIGHT and phases[i] == STANCE:
            s = touchdown_fraction(prev, nxt, theta, params, floor)
            events.append(Event(times[i - 1] + (1.0 if s is None else s) * dt, "touchdown", FLIGHT, STANCE))
        elif phases[i - 1] == STANCE and phases[i] == FLIGHT:
            foot = feet[i - 1] if feet is not None else foot_point(prev, theta, params)
            s = liftoff_fraction(prev, nxt, foot, params)
            events.append(Event(times[i - 1] + (1.0 if s is None else s) * dt, "liftoff", STANCE, FLIGHT))
        elif phases[i - 1] == FLIGHT and phases[i] == FLIGHT:
            s = apex_fraction(prev, nxt)
            if s is not None:
                events.append(Event(times[i - 1] + s * dt, "apex", FLIGHT, FLIGHT,
                                    prev + s * (nxt - prev)))
    return events


@dataclass
class HopResult:
    apex: np.ndarray = None  # (x, ẋ, y, ẏ) no próximo ápice
    duration: float = 0.0
    events: list = field(default_factory=list)
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    valid: bool = True
    collision: bool = False
    cause: str = ""


def _flat(height):
    return height if callable(height) else (lambda x: height)


def simulate_hop(state, controls, params=None, dt=1e-3, floor=0.0, ceiling=None, t0=0.0, max_time=3.0, record=False):
    """
    Um salto completo: voo até o toque, apoio com força constante F até a
    decolagem, voo até o próximo ápice. θ é aplicado instantaneamente no ápice
    de partida. floor/ceiling podem ser constantes ou funções de x.
    """
    params = params or PogoParams()
    floor_at, ceiling_at = _flat(floor), (None if ceiling is None else _flat(ceiling))
    force, theta = float(controls[0]), float(controls[1])
    x = np.asarray(state, dtype=float).copy()
    result = HopResult()
    phase, foot, lifted = FLIGHT, None, False
    t = t0

    def keep(time, st, ph):
        if record:
            result.times.append(time)
            result.states.append(st.copy())
            result.phases.append(ph)

    def event(time, kind, src, dst=None, st=None):
        result.events.append(Event(time, kind, src, dst, None if st is None else st.copy()))

    keep(t, x, phase)
    while t - t0 < max_time:
        try:
            nxt = x + pogo_flow(x, phase, foot, params, [[force, theta]])[0] * dt
        except SingularLegError as exc:
            result.valid, result.cause = False, str(exc)
            event(t, "invalid", phase)
            return result
        floor_here = floor_at(nxt[0])
        if nxt[2] <= floor_here:
            # cabeça atravessou o chão dentro do passo
            s = _crossing(x[2] - floor_at(x[0]), nxt[2] - floor_here)
            nxt = x + s * (nxt - x)
            t += s * dt
            keep(t, nxt, phase)
            result.valid, result.collision, result.cause = False, True, "head reached the floor"
            event(t, "invalid", phase, st=nxt)
            return result
        if ceiling_at is not None and nxt[2] >= ceiling_at(nxt[0]) and not result.collision:
            result.collision = True
            event(t + dt, "collision", phase, st=nxt)
        if phase == FLIGHT:
            s = touchdown_fraction(x, nxt, theta, params, floor_at(nxt[0] + params.l0 * np.sin(theta)))
            if s is not None and not lifted:
                x = x + s * (nxt - x)
                t += s * dt
                foot = foot_point(x, theta, params)
                phase = STANCE
                keep(t, x, phase)
                event(t, "touchdown", FLIGHT, STANCE, x)
                continue
            s = apex_fraction(x, nxt) if lifted else None
            if s is not None:
                x = x + s * (nxt - x)
                t += s * dt
                keep(t, x, phase)
                event(t, "apex", FLIGHT, FLIGHT, x)
                result.apex, result.duration = x, t - t0
                return result
        else:
            s = liftoff_fraction(x, nxt, foot, params)
            if s is not None:
                x = x + s * (nxt - x)
                t += s * dt
                phase, lifted = FLIGHT, True
                keep(t, x, phase)
                event(t, "liftoff", STANCE, FLIGHT, x)
                if x[3] <= 0.0:
                    result.valid, result.cause = False, "no upward velocity at liftoff"
                    event(t, "invalid", FLIGHT)
                    return result
                continue
        x = nxt
        t += dt
        keep(t, x, phase)
    result.valid, result.cause = False, "no apex within the time limit"
    event(t, "invalid", phase)
    return result


def collect_apex_data(n, rng, params=None, dt=1e-3, height_range=(0.6, 2.2), speed_range=(0.2, 2.0)):
    """
    Transições ápice→ápice em chão plano: entradas (h, ẋ, F, θ), saídas
    (h', ẋ', distância do salto). Amostras inválidas são descartadas.
    """
    params = params or PogoParams()
    inputs, outputs = [], []
    attempts = 0
    while len(inputs) < n and attempts < 20 * n:
        attempts += 1
        h = rng.uniform(*height_range)
        vx = rng.uniform(*speed_range)
        force = rng.uniform(-params.max_force, params.max_force)
        theta = rng.uniform(-params.max_angle, params.max_angle)
        if h - params.l0 * np.cos(theta) <= 0.02:
            continue
        hop = simulate_hop([0.0, vx, h, 0.0], (force, theta), params, dt)
        if not hop.valid or hop.apex is None:
            continue
        inputs.append([h, vx, force, theta])
        outputs.append([hop.apex[2], hop.apex[1], hop.apex[0]])
    if len(inputs) < n:
        logger.warning("only %d of %d apex transitions were valid", len(inputs), n)
    return np.array(inputs), np.array(outputs)
