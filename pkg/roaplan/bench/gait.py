"""
Busca de marchas do compass-gait e controlador de rastreamento da marcha.

O controlador é um PD no quadril sobre a restrição virtual q2 + 2q1 = A·sin(πs),
s a fase da passada, mais um torque de avanço c0 + c1·s. A passada é o mapa
estado pós-impacto → próximo estado pós-impacto; uma marcha é um ponto fixo
desse mapa com q1 = q1_ref. Entre passadas a correção de c0 vem da rede de passada
treinada sobre a linearização da biblioteca (ou do ganho LQR discreto, sem a rede).
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_discrete_are
from scipy.optimize import least_squares

from ..autodiff import data_of, fit_regression
from ..certificates import init_certificate, train_mode
from ..conf import ClfConfig, GaitConfig
from ..dynamics.hybrid import ModeSpec, as_batch
from ..dynamics.walker import WalkerParams, guard_value, walker_flow, walker_guard, walker_jump, walker_valid
from ..exceptions import InfeasibleGaitError, InvalidDynamicsError
from ..io import read_yaml, write_yaml
from ..roa import train_roa_classifier

logger = logging.getLogger(__name__)

INVALID_RESIDUAL = 10.0
MAX_PHASE = 1.25
MAX_CORRECTION = 5.0


def _rows(value, n):
    return np.broadcast_to(np.asarray(value, dtype=float).reshape(-1), (n,)).copy()


def stride_phase(q1, q_ref):
    """s = (q_ref − q1)/(2 q_ref): 0 logo após o impacto, 1 no impacto nominal"""
    return np.clip((q_ref - q1) / (2.0 * q_ref), 0.0, MAX_PHASE)


def gait_torque(x, q_ref, c0, c1, dc0=0.0, amplitude=0.15, kp=200.0, kd=20.0):
    x = as_batch(x, 4)
    n = len(x)
    q_ref, c0, c1, dc0 = (_rows(v, n) for v in (q_ref, c0, c1, dc0))
    q1, q2, dq1, dq2 = x.T
    raw = (q_ref - q1) / (2.0 * q_ref)
    s = np.clip(raw, 0.0, MAX_PHASE)
    ds = np.where((raw > 0.0) & (raw < MAX_PHASE), -dq1 / (2.0 * q_ref), 0.0)
    q2_d = amplitude * np.sin(np.pi * s) - 2.0 * q1
    dq2_d = amplitude * np.pi * np.cos(np.pi * s) * ds - 2.0 * dq1
    # o torque do quadril entra em q̈2 com sinal negativo
    u = kp * (q2 - q2_d) + kd * (dq2 - dq2_d) + c0 + c1 * s + dc0
    return u[:, None]


@dataclass
class StrideResult:
    pre: np.ndarray
    post: np.ndarray
    duration: np.ndarray
    valid: np.ndarray


def stride_batch(x0, q_ref, c0, c1, dc0=0.0, params=None, config=None):
    """
    Uma passada por linha: Euler até a guarda de impacto (instante interpolado
    dentro do passo) e o salto. Linhas que saem do conjunto válido ou não tocam o
    chão até max_stride_time ficam inválidas com NaN.
    """
    params = params or WalkerParams()
    config = config or GaitConfig()
    x = as_batch(x0, 4).copy()
    n = len(x)
    q_ref, c0, c1, dc0 = (_rows(v, n) for v in (q_ref, c0, c1, dc0))
    active = np.ones(n, dtype=bool)
    valid = np.ones(n, dtype=bool)
    pre = np.full((n, 4), np.nan)
    post = np.full((n, 4), np.nan)
    duration = np.full(n, np.nan)
    dt = config.dt
    for k in range(int(round(config.max_stride_time / dt))):
        idx = np.flatnonzero(active)
        if not idx.size:
            break
        xa = x[idx]
        u = gait_torque(xa, q_ref[idx], c0[idx], c1[idx], dc0[idx], config.amplitude, config.kp, config.kd)
        with np.errstate(all="ignore"):
            try:
                xn = xa + walker_flow(xa, u, params) * dt
            except InvalidDynamicsError:
                xn = np.full_like(xa, np.nan)
        bad = ~np.isfinite(xn).all(axis=1) | ~walker_valid(xn)
        valid[idx[bad]] = False
        active[idx[bad]] = False
        hit = np.zeros(len(idx), dtype=bool)
        hit[~bad] = walker_guard(xa[~bad], xn[~bad])
        if hit.any():
            before, after = guard_value(xa[hit]), guard_value(xn[hit])
            s = np.clip(before / (before - after), 0.0, 1.0)
            cross = xa[hit] + s[:, None] * (xn[hit] - xa[hit])
            rows = idx[hit]
            pre[rows] = cross
            post[rows] = walker_jump(cross, params)
            duration[rows] = (k + s) * dt
            active[rows] = False
        move = ~bad & ~hit
        x[idx[move]] = xn[move]
    valid &= ~active
    return StrideResult(pre, post, duration, valid)


def solve_fixed_point(residual, guesses, tolerance=1e-6, bounds=(-np.inf, np.inf)):
    """least_squares (trf) a partir de cada chute; a primeira solução abaixo da tolerância vence"""
    best = None
    for guess in guesses:
        try:
            sol = least_squares(residual, np.asarray(guess, dtype=float), method="trf", bounds=bounds,
                                xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=200)
        except (ValueError, InvalidDynamicsError) as exc:
            logger.debug("fixed-point search from %s failed: %s", guess, exc)
            continue
        norm = float(np.linalg.norm(sol.fun))
        if best is None or norm < best[1]:
            best = (sol.x, norm)
        if norm < tolerance:
            break
    return best


@dataclass
class GaitTarget:
    q_ref: float
    state: np.ndarray  # pós-impacto no ponto fixo
    pre_impact: np.ndarray
    c0: float
    c1: float
    residual: float
    duration: float
    gain: np.ndarray = field(default_factory=lambda: np.zeros(4))
    # passada linearizada: x⁺ − x* ≈ A(x − x*) + B·Δc0
    jacobian_state: np.ndarray = field(default_factory=lambda: np.zeros((4, 4)))
    jacobian_input: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def to_dict(self):
        return {"q_ref": float(self.q_ref), "state": self.state.tolist(), "pre_impact": self.pre_impact.tolist(),
                "c0": float(self.c0), "c1": float(self.c1), "residual": float(self.residual),
                "duration": float(self.duration), "gain": self.gain.tolist(),
                "jacobian_state": self.jacobian_state.tolist(), "jacobian_input": self.jacobian_input.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(float(data["q_ref"]), np.asarray(data["state"], dtype=float),
                   np.asarray(data["pre_impact"], dtype=float), float(data["c0"]), float(data["c1"]),
                   float(data["residual"]), float(data["duration"]), np.asarray(data["gain"], dtype=float),
                   np.asarray(data.get("jacobian_state", np.zeros((4, 4))), dtype=float).reshape(4, 4),
                   np.asarray(data.get("jacobian_input", np.zeros(4)), dtype=float).reshape(4))


def _initial_state(q_ref, dq1, amplitude):
    dq2 = -2.0 * dq1 - amplitude * np.pi * dq1 / (2.0 * q_ref)
    return np.array([q_ref, -2.0 * q_ref, dq1, dq2])


def stride_linearization(target, params=None, config=None, h=1e-5):
    """
    Linearização da passada por diferenças centrais: A em relação ao estado
    pós-impacto, B em relação à correção de c0. None se alguma passada perturbada falhar.
    """
    config = config or GaitConfig()
    x0 = target.state
    batch = np.concatenate([x0 + h * np.eye(4), x0 - h * np.eye(4), [x0, x0]])
    dc0 = np.concatenate([np.zeros(8), [h, -h]])
    res = stride_batch(batch, target.q_ref, target.c0, target.c1, dc0, params, config)
    if not res.valid.all():
        return None
    A = ((res.post[:4] - res.post[4:8]) / (2 * h)).T
    B = (res.post[8] - res.post[9]) / (2 * h)
    return A, B


def stride_gain(A, B, q_ref=None):
    """K do LQR discreto (Q = I, R = 1) da passada linearizada; zero se a Riccati não tiver solução"""
    B = np.asarray(B, dtype=float).reshape(-1, 1)
    R = np.eye(1)
    try:
        P = solve_discrete_are(A, B, np.eye(len(A)), R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("gait q_ref=%s: no stride LQR (%s), gain set to zero", q_ref, exc)
        return np.zeros(len(A))
    return np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)[0]


def find_gait(q_ref, params=None, config=None, guesses=(-1.0, -0.8, -1.3, -0.6, -1.6)):
    """
    Ponto fixo de período um da passada com q1 = q_ref no pós-impacto.
    Incógnitas: velocidades pós-impacto e coeficientes (c0, c1) do torque de avanço.
    """
    params = params or WalkerParams()
    config = config or GaitConfig()
    q_ref = float(q_ref)
    if not 0.0 < q_ref < np.pi / 4:
        raise InfeasibleGaitError(f"q_ref={q_ref} outside (0, pi/4)")

    def state_of(z):
        return np.array([q_ref, -2.0 * q_ref, z[0], z[1]])

    def residual(z):
        x0 = state_of(z)
        res = stride_batch(x0, q_ref, z[2], z[3], 0.0, params, config)
        if not res.valid[0]:
            return np.full(4, INVALID_RESIDUAL)
        return res.post[0] - x0

    starts = []
    for dq1 in guesses:
        x0 = _initial_state(q_ref, dq1, config.amplitude)
        starts.append([x0[2], x0[3], 0.0, 0.0])
    found = solve_fixed_point(residual, starts, config.tolerance)
    if found is None or found[1] >= config.tolerance:
        norm = np.inf if found is None else found[1]
        raise InfeasibleGaitError(f"no gait fixed point for q_ref={q_ref:.3f} (best residual {norm:.2e})")
    z, norm = found
    x0 = state_of(z)
    res = stride_batch(x0, q_ref, z[2], z[3], 0.0, params, config)
    target = GaitTarget(q_ref, x0, res.pre[0], float(z[2]), float(z[3]), norm, float(res.duration[0]))
    linear = stride_linearization(target, params, config)
    if linear is None:
        logger.warning("gait q_ref=%.3f: perturbed strides invalid, no stride linearization", q_ref)
    else:
        target.jacobian_state, target.jacobian_input = linear
        target.gain = stride_gain(*linear, q_ref=q_ref)
    logger.info("gait q_ref=%.3f: residual %.2e, stride %.3f s", q_ref, norm, target.duration)
    return target


@dataclass
class GaitLibrary:
    """Marchas numa grade de q_ref; valores intermediários por interpolação linear"""

    gaits: list
    amplitude: float = 0.15
    kp: float = 200.0
    kd: float = 20.0

    def __post_init__(self):
        if not self.gaits:
            raise InfeasibleGaitError("gait library is empty")
        self.gaits = sorted(self.gaits, key=lambda g: g.q_ref)

    @property
    def q_refs(self):
        return np.array([g.q_ref for g in self.gaits])

    @property
    def q_range(self):
        return float(self.q_refs.min()), float(self.q_refs.max())

    def _interp(self, q, values):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return np.interp(q, self.q_refs, values)
        return np.stack([np.interp(q, self.q_refs, values[:, k]) for k in range(values.shape[1])], axis=1)

    def coefficients(self, q):
        return self._interp(q, [g.c0 for g in self.gaits]), self._interp(q, [g.c1 for g in self.gaits])

    def fixed_point(self, q):
        return self._interp(q, [g.state for g in self.gaits])

    def correction(self, q, x_post):
        """Δc0 = −K(q)·(x − x*(q)), limitada"""
        x_post = as_batch(x_post, 4)
        gain = self._interp(q, [g.gain for g in self.gaits])
        dc0 = -np.sum(gain * (x_post - self.fixed_point(q)), axis=1)
        return np.clip(dc0, -MAX_CORRECTION, MAX_CORRECTION)

    def linearization(self, q):
        """A(q) (B, 4, 4) e B(q) (B, 4) interpolados"""
        A = self._interp(q, [g.jacobian_state.reshape(-1) for g in self.gaits]).reshape(-1, 4, 4)
        return A, self._interp(q, [g.jacobian_input for g in self.gaits])

    def fixed_point_lipschitz(self):
        """Maior ‖Δx*‖/Δq entre marchas vizinhas da grade"""
        if len(self.gaits) < 2:
            return 0.0
        states = np.array([g.state for g in self.gaits])
        slopes = np.linalg.norm(np.diff(states, axis=0), axis=1) / np.diff(self.q_refs)
        return float(slopes.max())

    def gait_error(self, q, x_post):
        return np.linalg.norm(as_batch(x_post, 4) - self.fixed_point(q), axis=1)

    def to_dict(self):
        return {"amplitude": self.amplitude, "kp": self.kp, "kd": self.kd,
                "gaits": [g.to_dict() for g in self.gaits]}

    @classmethod
    def from_dict(cls, data):
        return cls([GaitTarget.from_dict(g) for g in data["gaits"]], float(data["amplitude"]),
                   float(data["kp"]), float(data["kd"]))

    def save(self, path):
        return write_yaml(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_yaml(path, "gait library"))

    def stride_config(self, base=None):
        base = base or GaitConfig()
        return replace(base, amplitude=self.amplitude, kp=self.kp, kd=self.kd)


class GaitController:
    """
    Controle do modo walker com configuração p = (q_ref, Δc0). Δc0 é escolhido a
    cada impacto pela rede de passada treinada; sem ela, pelo ganho LQR da biblioteca.
    """

    def __init__(self, library, stride_net=None):
        self.library = library
        self.stride_net = stride_net

    def correction(self, q, x_post):
        x_post = as_batch(x_post, 4)
        q = _rows(q, len(x_post))
        if self.stride_net is None:
            return self.library.correction(q, x_post)
        return np.asarray(data_of(self.stride_net(x_post, q[:, None])), dtype=float)[:, 0]

    def __call__(self, x, p):
        p = as_batch(p, 2)
        c0, c1 = self.library.coefficients(p[:, 0])
        return gait_torque(x, p[:, 0], c0, c1, p[:, 1], self.library.amplitude, self.library.kp, self.library.kd)


def build_gait_library(config=None, params=None, grid=None):
    config = config or GaitConfig()
    gaits = []
    for q_ref in grid if grid is not None else config.grid:
        try:
            gaits.append(find_gait(q_ref, params, config))
        except InfeasibleGaitError as exc:
            logger.warning("skipping gait: %s", exc)
    if not gaits:
        raise InfeasibleGaitError("no gait on the grid has a fixed point")
    return GaitLibrary(gaits, config.amplitude, config.kp, config.kd)


def run_strides(library, x0, q_ref, n_strides, params=None, config=None, controller=None):
    """n passadas com a correção de c0 recalculada a cada impacto; devolve (estado, válido)"""
    config = library.stride_config(config)
    controller = controller or GaitController(library)
    x = as_batch(x0, 4).copy()
    q_ref = _rows(q_ref, len(x))
    valid = np.ones(len(x), dtype=bool)
    for _ in range(int(n_strides)):
        idx = np.flatnonzero(valid)
        if not idx.size:
            break
        c0, c1 = library.coefficients(q_ref[idx])
        dc0 = controller.correction(q_ref[idx], x[idx])
        res = stride_batch(x[idx], q_ref[idx], c0, c1, dc0, params, config)
        valid[idx[~res.valid]] = False
        x[idx[res.valid]] = res.post[res.valid]
    return x, valid


def collect_walker_labels(library, config=None, rng=None, params=None, controller=None):
    """
    Estados pós-impacto perturbados em torno da marcha interpolada e o rótulo
    "converge para a ε-bola da marcha em label_strides passadas".
    """
    config = config or GaitConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    n = int(config.label_samples)
    lo, hi = library.q_range
    q_ref = rng.uniform(lo, hi, size=n)
    x_star = library.fixed_point(q_ref)
    scale = rng.uniform(0.0, 1.0, size=(n, 1))
    dq1 = scale[:, 0] * rng.uniform(-0.05, 0.05, size=n)
    dv = scale * rng.uniform(-0.6, 0.6, size=(n, 2))
    states = x_star.copy()
    states[:, 0] = np.maximum(x_star[:, 0] + dq1, 1e-3)
    states[:, 1] = -2.0 * states[:, 0]
    states[:, 2:] += dv
    final, valid = run_strides(library, states, q_ref, config.label_strides, params, config, controller)
    inside = valid & (library.gait_error(q_ref, np.where(valid[:, None], final, x_star)) <= config.label_radius)
    logger.info("walker labels: %d of %d states converge to their gait", int(inside.sum()), n)
    return states, q_ref[:, None], inside


def train_walker_classifier(library, config=None, rng=None, params=None, controller=None):
    config = config or GaitConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    states, features, inside = collect_walker_labels(library, config, rng, params, controller)
    classifier = train_roa_classifier(states, features, inside, config.classifier_hidden,
                                      config.classifier_iterations, 1e-3, rng)
    return classifier, (states, features, inside)


def stride_mode(library, sample_radius=(0.02, 0.04, 0.3, 0.3), valid_radius=2.0):
    """
    Modo discreto de uma passada por passo, linearizado em torno das marchas da
    biblioteca: x⁺ = x*(q) + A(q)(x − x*(q)) + B(q)·Δc0. Configuração p = (q_ref,),
    controle Δc0; é sobre ele que V e a rede de passada são treinadas.
    """
    lo, hi = library.q_range
    radius = np.asarray(sample_radius, dtype=float)

    def equilibrium(p):
        return library.fixed_point(np.asarray(data_of(p), dtype=float)[:, 0])

    def step_map(x, u, p):
        q = np.asarray(data_of(p), dtype=float)[:, 0]
        A, B = library.linearization(q)
        x_star = library.fixed_point(q)
        d = x - x_star
        return x_star + (A * d.reshape(len(q), 1, 4)).sum(axis=2) + u * B

    return ModeSpec(
        name="walker", state_dim=4, control_dim=1, config_dim=1,
        equilibrium=equilibrium,
        control_low=[-MAX_CORRECTION], control_high=[MAX_CORRECTION],
        config_low=[lo], config_high=[hi],
        sample_low=-radius, sample_high=radius,
        step_map=step_map,
        nominal_control=lambda p: np.zeros((len(p), 1)),
        features=lambda p: p[:, :1], feature_dim=1,
        valid=lambda x, p: np.abs(np.asarray(x) - equilibrium(p)).max(axis=1) < valid_radius,
    )


def seed_stride_controller(controller, library, mode, rng, n_samples=2000, iterations=500, learning_rate=1e-2):
    """Ajusta a rede de passada à correção LQR da biblioteca antes do treino CLF"""
    configs = mode.sample_configs(rng, n_samples)
    states = mode.sample_states(rng, configs)
    inputs = np.concatenate([states - mode.equilibrium(configs), configs[:, :1]], axis=1)
    targets = np.clip(library.correction(configs[:, 0], states) / MAX_CORRECTION, -0.95, 0.95)
    history = fit_regression(controller.net, inputs, targets, iterations, learning_rate, rng)
    if history:
        logger.info("stride controller seeded from the gait LQR: MSE %.3e", history[-1])
    return controller


def train_stride_certificate(library, config=None, rng=None, diagnostics_dir=None, seed_iterations=500):
    """V e rede de passada do walker: semeadura pelo LQR da biblioteca e treino CLF no modo de passada"""
    config = config or ClfConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    mode = stride_mode(library)
    lyap, ctrl = init_certificate(mode, config.hidden, rng)
    seed_stride_controller(ctrl, library, mode, rng, iterations=seed_iterations)
    return train_mode(mode, config, rng, init=(lyap, ctrl), diagnostics_dir=diagnostics_dir)
