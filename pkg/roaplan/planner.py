"""
Planejador diferenciável de configuração e verificações numéricas das condições
de estabilidade na troca de modo.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import OptimizerState, Tensor, data_of, norm, relu, rmsprop_step, value_and_grad
from .conf import PlannerConfig
from .dynamics.hybrid import as_batch
from .exceptions import InvalidDynamicsError, NonFiniteError, PlannerFailureError, PremiseViolationError

logger = logging.getLogger(__name__)


def _features(nets, p):
    return nets.features(p) if hasattr(nets, "features") else nets.mode.features_of(p)


def entering_term(x_i, p_i, nets_i, roa):
    """ReLU(V_i(x_i, p_i) − R(p_i)); x_i pode ser função de p_i"""
    x_i = x_i(p_i) if callable(x_i) else x_i
    return relu(nets_i.value(x_i, p_i) - roa(_features(nets_i, p_i)))


def planner_loss(x_i, p_i, p_j, nets_i, nets_j, roa, jump, eta=0.9, kappa=1e-2, roa_j=None):
    """
    ReLU(V_i(x_i, p_i) − R(p_i)) + ReLU(V_j(h_i(x*, u*; p_i, p_j), p_j) − η·R(p_j) + κ)

    x_i e p_j podem ser funções de p_i (estado de entrada e configuração seguinte
    que dependem da escolha); jump(p_i, p_j) devolve h_i avaliado no equilíbrio.
    roa_j, quando dado, é o estimador do modo j.
    """
    p_j = p_j(p_i) if callable(p_j) else p_j
    roa_j = roa if roa_j is None else roa_j
    landing = relu(nets_j.value(jump(p_i, p_j), p_j) - eta * roa_j(_features(nets_j, p_j)) + kappa)
    return entering_term(x_i, p_i, nets_i, roa) + landing


def planner_loss_heuristic(x_i, p_i, p_j, nets_i, roa, lam=1.0):
    """ReLU(V_i(x_i, p_i) − R(p_i)) + λ‖p_j − p_i‖"""
    return entering_term(x_i, p_i, nets_i, roa) + lam * norm(p_j - p_i, axis=1)


def classifier_term(x_i, p_i, classifier, threshold=0.9):
    """ReLU(score(x_i, p_i) − limiar): zero quando o classificador diz "dentro" """
    x_i = x_i(p_i) if callable(x_i) else x_i
    return relu(classifier.score(x_i, p_i) - threshold)


def planner_loss_classifier(x_i, p_i, p_j, classifier, threshold=0.9, lam=1.0):
    return classifier_term(x_i, p_i, classifier, threshold) + lam * norm(p_j - p_i, axis=1)


@dataclass
class SwitchProblem:
    """
    Busca sobre as variáveis livres z ∈ [lower, upper]: configure(z) monta p_i,
    loss(p_i) devolve uma perda por hipótese e residual(p_i), quando dado, o termo
    que decide a viabilidade (por padrão a própria perda). nominal é o z de fallback.
    """

    configure: Callable
    loss: Callable
    lower: np.ndarray
    upper: np.ndarray
    nominal: np.ndarray
    residual: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        self.nominal = np.clip(np.atleast_1d(np.asarray(self.nominal, dtype=float)), self.lower, self.upper)

    def objective(self, z):
        return self.loss(self.configure(z))

    def feasibility(self, z):
        return self.residual(self.configure(z)) if self.residual is not None else self.objective(z)


@dataclass
class PlanResult:
    p_i: np.ndarray
    z: np.ndarray
    loss: float
    feasible: bool
    iterations: int
    index: int = 0
    fallback: bool = False
    history: Optional[np.ndarray] = field(default=None, repr=False)


def _numeric_losses(loss_fn, z):
    """Perda por hipótese sem gravar a fita; valores não finitos viram inf"""
    try:
        with np.errstate(all="ignore"):
            values = np.asarray(data_of(loss_fn(z)), dtype=float).reshape(-1)
    except (NonFiniteError, InvalidDynamicsError):
        if len(z) == 1:
            return np.array([np.inf])
        return np.concatenate([_numeric_losses(loss_fn, z[i:i + 1]) for i in range(len(z))])
    return np.where(np.isfinite(values), values, np.inf)


def _better(loss, ok, best_loss, best_ok):
    """Viável antes de inviável; dentro da mesma classe, menor perda"""
    return (ok & ~best_ok) | ((ok == best_ok) & (loss < best_loss))


def search_configuration(loss_fn, lower, upper, config=None, rng=None, seeds=None, residual_fn=None):
    """
    Hipóteses uniformes na caixa, `steps` passos de RMSProp em cada uma
    (recortando para a caixa) e a melhor delas, empate pelo menor índice.
    Cada hipótese guarda a melhor configuração que já visitou.
    """
    config = config or PlannerConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if np.any(lower > upper):
        raise PlannerFailureError("empty configuration box")
    z = rng.uniform(lower, upper, size=(int(config.hypotheses), len(lower)))
    if seeds is not None:
        seeds = np.clip(as_batch(seeds, len(lower)), lower, upper)[: len(z)]
        z[: len(seeds)] = seeds

    def evaluate(mask):
        losses = np.full(len(z), np.inf)
        losses[mask] = _numeric_losses(loss_fn, z[mask])
        if residual_fn is None:
            ok = losses < config.feasibility_tol
        else:
            res = np.full(len(z), np.inf)
            res[mask] = _numeric_losses(residual_fn, z[mask])
            ok = res < config.feasibility_tol
        return losses, ok

    losses, ok = evaluate(np.ones(len(z), dtype=bool))
    alive = np.isfinite(losses)
    if not alive.any():
        raise PlannerFailureError("every configuration hypothesis evaluates to a non-finite loss")
    best_z, best_loss, best_ok = z.copy(), losses.copy(), ok.copy()
    history = [losses.copy()]
    leaf = Tensor(z[alive], requires_grad=True)
    state = OptimizerState.for_params([leaf], config.learning_rate)
    iterations = 0
    for _ in range(int(config.steps)):
        try:
            _, (grad,) = value_and_grad(lambda: loss_fn(leaf).sum(), [leaf])
        except (NonFiniteError, InvalidDynamicsError) as exc:
            logger.debug("planner descent stopped: %s", exc)
            break
        rmsprop_step([leaf], [grad], state)
        leaf.data = np.clip(leaf.data, lower, upper)
        z[alive] = leaf.data
        losses, ok = evaluate(alive)
        improved = _better(losses, ok, best_loss, best_ok)
        best_z[improved], best_loss[improved], best_ok[improved] = z[improved], losses[improved], ok[improved]
        history.append(losses.copy())
        iterations += 1
    candidates = np.flatnonzero(best_ok) if best_ok.any() else np.arange(len(z))
    index = int(candidates[np.argmin(best_loss[candidates])])
    return PlanResult(best_z[index].copy(), best_z[index].copy(), float(best_loss[index]), bool(best_ok[index]),
                      iterations, index, history=np.array(history))


def plan(problem, config=None, rng=None):
    """Melhor hipótese para o problema de troca; hipótese 0 parte do z nominal"""
    result = search_configuration(problem.objective, problem.lower, problem.upper, config, rng,
                                  seeds=problem.nominal[None, :],
                                  residual_fn=problem.feasibility if problem.residual is not None else None)
    result.p_i = data_of(problem.configure(result.z[None, :]))[0]
    return result


def plan_or_fallback(problem, config=None, rng=None):
    """plan(); inviável ou sem hipótese finita → configuração nominal com aviso"""
    try:
        result = plan(problem, config, rng)
    except PlannerFailureError as exc:
        logger.warning("planner failed %s (%s): using the nominal configuration", problem.label, exc)
        z = problem.nominal
        return PlanResult(data_of(problem.configure(z[None, :]))[0], z, np.inf, False, 0, fallback=True)
    if result.feasible:
        return result
    logger.warning("certificate gap %s: best planner loss %.3e, using the nominal configuration",
                   problem.label, result.loss)
    z = problem.nominal
    loss = float(_numeric_losses(problem.objective, z[None, :])[0])
    return PlanResult(data_of(problem.configure(z[None, :]))[0], z, loss, False, result.iterations,
                      fallback=True, history=result.history)


@dataclass
class LipschitzEstimate:
    K: float
    x_star: np.ndarray
    p_i: np.ndarray
    p_j: np.ndarray
    step: float


def lipschitz_estimate(jump, x_star, p_i, p_j, epsilon=1e-2):
    """‖∂h/∂x‖₂ por diferenças centrais em x*; jump(x, p_i, p_j) em lote"""
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    p_i, p_j = as_batch(p_i), as_batch(p_j)
    step = min(epsilon, 1e-4)
    n = len(x_star)
    plus = x_star + step * np.eye(n)
    minus = x_star - step * np.eye(n)
    reps = lambda p: np.repeat(p, n, axis=0)
    jac = (np.asarray(data_of(jump(plus, reps(p_i), reps(p_j))))
           - np.asarray(data_of(jump(minus, reps(p_i), reps(p_j))))).T / (2 * step)
    if not np.all(np.isfinite(jac)):
        raise NonFiniteError("lipschitz_estimate", "non-finite finite-difference Jacobian")
    return LipschitzEstimate(float(np.linalg.norm(jac, 2)), x_star, p_i[0], p_j[0], step)


@dataclass
class SwitchConditionReport:
    holds: bool
    entering_margin: float
    transition_margin: float
    upsilon: float


def switch_condition_check(x_i, p_i, p_j, nets_i, nets_j, bounds_j, K_i, c_i, c_j, epsilon, jump):
    """
    V_i(x_i, p_i) ≤ c_i e V_j(h_i(x*), p_j) ≤ Υ, Υ = (α_j/β_j)·c_j − α_j·K_i·ε.
    Margens positivas significam condição satisfeita.
    """
    p_i, p_j = as_batch(p_i), as_batch(p_j)
    upsilon = bounds_j.alpha / bounds_j.beta * c_j - bounds_j.alpha * K_i * epsilon
    v_i = float(np.asarray(data_of(nets_i.value(as_batch(x_i), p_i))).reshape(-1)[0])
    v_j = float(np.asarray(data_of(nets_j.value(as_batch(data_of(jump(p_i, p_j))), p_j))).reshape(-1)[0])
    entering, transition = c_i - v_i, upsilon - v_j
    return SwitchConditionReport(entering >= 0.0 and transition >= 0.0, entering, transition, upsilon)


def switch_count_bound(p_i, p_j, levels, betas, lipschitz, epsilon):
    """N = ⌈‖p_j − p_i‖ / min_m(c_m/β_m − K_m·ε)⌉"""
    levels, betas, lipschitz = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (levels, betas, lipschitz))
    denominator = float(np.min(levels / betas - lipschitz * epsilon))
    if denominator <= 0.0:
        raise PremiseViolationError(f"minimum step c/beta - K*eps = {denominator:.3e} is not positive")
    distance = float(np.linalg.norm(np.asarray(p_j, dtype=float) - np.asarray(p_i, dtype=float)))
    return int(np.ceil(distance / denominator - 1e-12))
