"""
Controladores de comparação: LQR por linearização (Riccati via iteração de
Kleinman) e MPC de tiro simples por descida de gradiente no horizonte.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .autodiff import Tensor, data_of, value_and_grad
from .conf import BaselineConfig
from .dynamics.hybrid import as_batch
from .exceptions import InvalidDynamicsError, NonFiniteError, RiccatiError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    x_star: np.ndarray
    u_star: np.ndarray
    p: np.ndarray

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def control_dim(self):
        return self.B.shape[1]


def linearize(flow, x_star, u_star, p, h=1e-5):
    """A = ∂f/∂x, B = ∂f/∂u por diferenças centrais em (x*, u*)"""
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    u_star = np.asarray(u_star, dtype=float).reshape(-1)
    p = as_batch(p)
    n, m = len(x_star), len(u_star)

    def columns(center, size, build):
        eye = h * np.eye(size)
        plus = np.asarray(data_of(build(center + eye)))
        minus = np.asarray(data_of(build(center - eye)))
        return (plus - minus).T / (2 * h)

    reps = lambda v, k: np.repeat(v[None, :], k, axis=0)
    with np.errstate(all="ignore"):
        A = columns(x_star, n, lambda xs: flow(xs, reps(u_star, n), np.repeat(p, n, axis=0)))
        B = columns(u_star, m, lambda us: flow(reps(x_star, m), us, np.repeat(p, m, axis=0)))
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NonFiniteError("linearize", "non-finite Jacobian of the flow")
    return LinearModel(A, B, x_star, u_star, p[0].copy())


def stabilizable(A, B, tol=1e-9):
    """Teste PBH nos autovalores com parte real ≥ 0"""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            pencil = np.hstack([A - lam * np.eye(n), B.astype(complex)])
            if np.linalg.matrix_rank(pencil, tol=1e-8) < n:
                return False
    return True


def _hurwitz(A):
    return np.max(np.linalg.eigvals(A).real) < 0.0


def _stabilizing_seed(A, B):
    """K0 = 0 se A já é estável; senão o ganho de Bass"""
    m, n = B.shape[1], A.shape[0]
    if _hurwitz(A):
        return np.zeros((m, n))
    beta = np.linalg.norm(A, 2) + 1.0
    Z = solve_continuous_lyapunov(A + beta * np.eye(n), 2.0 * B @ B.T)
    K0 = B.T @ np.linalg.pinv(Z)
    if not _hurwitz(A - B @ K0):
        raise RiccatiError("could not build a stabilizing initial gain")
    return K0


def are_residual(A, B, Q, R, P):
    return float(np.linalg.norm(A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q))


@dataclass
class LqrGain:
    K: np.ndarray
    P: np.ndarray
    iterations: int
    residual: float


def lqr_synthesize(model, Q, R, tol=1e-8, max_iter=100):
    """
    Riccati contínua por Kleinman–Newton: a partir de um ganho estabilizante,
    resolve (A − BK)ᵀP + P(A − BK) = −(Q + KᵀRK) e atualiza K = R⁻¹BᵀP.
    O resíduo é medido relativo a max(1, ‖P‖).
    """
    A, B = np.asarray(model.A, dtype=float), np.asarray(model.B, dtype=float)
    Q, R = np.atleast_2d(np.asarray(Q, dtype=float)), np.atleast_2d(np.asarray(R, dtype=float))
    n, m = B.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise ShapeError(f"incompatible LQR shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}")
    if np.min(np.linalg.eigvalsh(R)) <= 0.0:
        raise RiccatiError("R must be positive definite")
    if not stabilizable(A, B):
        raise RiccatiError("(A, B) is not stabilizable")
    K = _stabilizing_seed(A, B)
    for it in range(1, max_iter + 1):
        closed = A - B @ K
        P = solve_continuous_lyapunov(closed.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        K = np.linalg.solve(R, B.T @ P)
        residual = are_residual(A, B, Q, R, P)
        if residual < tol * max(1.0, np.linalg.norm(P)):
            return LqrGain(K, P, it, residual)
    raise RiccatiError(f"Kleinman iteration did not converge in {max_iter} iterations (residual {residual:.2e})")


def weight_matrix(weights, size):
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if len(weights) == 1:
        weights = np.repeat(weights, size)
    if len(weights) != size:
        raise ShapeError(f"expected {size} weights, got {len(weights)}")
    return np.diag(weights)


@dataclass
class LqrController:
    """u = u*(p) − K(p)(x − x*(p)), recortado para a caixa de controle; ganhos por característica"""

    mode: object
    Q: np.ndarray
    R: np.ndarray
    gains: dict = field(default_factory=dict)

    def gain_for(self, p):
        p = as_batch(p, self.mode.config_dim)
        key = tuple(np.round(data_of(self.mode.features_of(p))[0], 6))
        if key not in self.gains:
            flow = self.mode.flow
            model = linearize(flow, data_of(self.mode.equilibrium(p))[0], self.mode.nominal(p)[0], p)
            self.gains[key] = lqr_synthesize(model, self.Q, self.R)
            logger.debug("LQR gain for %s at %s: %d Kleinman iterations", self.mode.name, key,
                         self.gains[key].iterations)
        return self.gains[key]

    def __call__(self, x, p):
        x = as_batch(x, self.mode.state_dim)
        p = as_batch(p, self.mode.config_dim)
        if len(p) == 1 and len(x) > 1:
            p = np.repeat(p, len(x), axis=0)
        out = np.empty((len(x), self.mode.control_dim))
        for i in range(len(x)):
            gain = self.gain_for(p[i:i + 1])
            d = x[i] - data_of(self.mode.equilibrium(p[i:i + 1]))[0]
            out[i] = self.mode.nominal(p[i:i + 1])[0] - gain.K @ d
        return np.clip(out, self.mode.control_low, self.mode.control_high)


@dataclass
class LqrCertificate:
    """V(x, p) = sqrt((x − x*)ᵀ P (x − x*))"""

    controller: LqrController

    @property
    def mode(self):
        return self.controller.mode

    def equilibrium(self, p):
        return self.mode.equilibrium(p)

    def value(self, x, p):
        x = as_batch(data_of(x), self.mode.state_dim)
        p = as_batch(p, self.mode.config_dim)
        if len(p) == 1 and len(x) > 1:
            p = np.repeat(p, len(x), axis=0)
        d = x - data_of(self.mode.equilibrium(p))
        out = np.empty(len(x))
        for i in range(len(x)):
            P = self.controller.gain_for(p[i:i + 1]).P
            out[i] = d[i] @ P @ d[i]
        return np.sqrt(np.maximum(out, 0.0))


def lqr_baseline(mode, config=None):
    config = config or BaselineConfig()
    n, m = mode.state_dim, mode.control_dim
    q = config.q_weights if len(config.q_weights) == n else (1.0,)
    r = config.r_weights if len(config.r_weights) == m else (1.0,)
    controller = LqrController(mode, weight_matrix(q, n), weight_matrix(r, m))
    return controller, LqrCertificate(controller)


@dataclass
class MpcConfig:
    horizon: int = 20
    q_weights: tuple = (1.0,)
    r_weights: tuple = (1.0,)
    iterations: int = 30
    learning_rate: float = 0.1
    max_halvings: int = 20

    def __post_init__(self):
        if self.horizon < 1:
            raise ShapeError("MPC horizon must be at least one step")

    @classmethod
    def from_baselines(cls, config):
        return cls(config.mpc_horizon, tuple(config.q_weights), tuple(config.r_weights),
                   config.mpc_iterations, config.mpc_learning_rate)


def tracking_cost(mode, q_weights, r_weights):
    """Σ (x − x*)ᵀQ(x − x*) + uᵀRu ao longo do horizonte"""
    n, m = mode.state_dim, mode.control_dim
    q = np.diag(weight_matrix(q_weights if len(q_weights) in (1, n) else (1.0,), n))
    r = np.diag(weight_matrix(r_weights if len(r_weights) in (1, m) else (1.0,), m))

    def cost(states, controls, p):
        x_star = mode.equilibrium(p)
        total = 0.0
        for x in states:
            d = x - x_star
            total = total + (d * d * q).sum()
        for u in controls:
            total = total + (u * u * r).sum()
        return total

    return cost


def _unroll(mode, x0, controls, p, dt):
    states, x = [], x0
    for k in range(controls.shape[0]):
        x = mode.step(x, controls[k:k + 1], p, dt)
        states.append(x)
    return states


@dataclass
class MpcSolution:
    controls: np.ndarray
    cost: float
    history: list


def mpc_shoot(mode, x0, p, config=None, cost=None, dt=0.01, u0=None):
    """
    Tiro simples: desenrola Euler no horizonte e desce o gradiente da sequência
    de controles empilhada; um passo que aumenta o custo é reduzido à metade.
    """
    config = config or MpcConfig()
    cost = cost or tracking_cost(mode, config.q_weights, config.r_weights)
    x0 = as_batch(x0, mode.state_dim)
    p = as_batch(p, mode.config_dim)
    controls = np.zeros((config.horizon, mode.control_dim)) if u0 is None else np.array(u0, dtype=float)
    if controls.shape != (config.horizon, mode.control_dim):
        raise ShapeError(f"initial control sequence has shape {controls.shape}")
    low, high = mode.control_low, mode.control_high

    def evaluate(seq):
        return float(data_of(cost(_unroll(mode, x0, seq, p, dt), [seq[k] for k in range(len(seq))], p)))

    current = evaluate(controls)
    if not np.isfinite(current):
        raise NonFiniteError("mpc_shoot", "non-finite cost of the initial control sequence")
    history = [current]
    for _ in range(int(config.iterations)):
        leaf = Tensor(controls, requires_grad=True)
        _, (grad,) = value_and_grad(
            lambda: cost(_unroll(mode, x0, leaf, p, dt), [leaf[k] for k in range(config.horizon)], p), [leaf])
        step = config.learning_rate
        for _ in range(config.max_halvings):
            candidate = np.clip(controls - step * grad, low, high)
            try:
                value = evaluate(candidate)
            except (NonFiniteError, InvalidDynamicsError):
                value = np.inf
            if value <= current:
                controls, current = candidate, value
                break
            step *= 0.5
        else:
            break
        history.append(current)
    return MpcSolution(controls, current, history)


@dataclass
class MpcController:
    """Horizonte recuante: replaneja a cada replan_every chamadas e aplica o primeiro controle"""

    mode: object
    config: MpcConfig
    dt: float = 0.01
    replan_every: int = 1
    plan: np.ndarray = None
    age: int = 0

    def reset(self):
        self.plan, self.age = None, 0

    def __call__(self, x, p):
        x = as_batch(x, self.mode.state_dim)
        p = as_batch(p, self.mode.config_dim)
        if len(x) > 1:
            return np.concatenate([MpcController(self.mode, self.config, self.dt)(x[i], p[min(i, len(p) - 1)])
                                   for i in range(len(x))])
        if self.plan is None or self.age >= min(self.replan_every, len(self.plan)):
            warm = None
            if self.plan is not None:
                warm = np.concatenate([self.plan[self.age:], np.repeat(self.plan[-1:], self.age, axis=0)])
            self.plan = mpc_shoot(self.mode, x, p, self.config, dt=self.dt, u0=warm).controls
            self.age = 0
        u = self.plan[self.age]
        self.age += 1
        return u[None, :].copy()
