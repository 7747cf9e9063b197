"""
Certificados por modo: função de Lyapunov neural, controlador neural e a perda
CLF que treina os dois juntos sobre estados visitados pelo próprio controlador.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import (
    OptimizerState, Tensor, concat, data_of, init_mlp, load_checkpoint, mlp_forward, norm, relu,
    rmsprop_step, save_checkpoint, tanh, value_and_grad,
)
from .conf import ClfConfig
from .dynamics.hybrid import as_batch, simulate_batch
from .exceptions import CertificateDefectError, NonFiniteError, ShapeError, TrainingDivergedError
from .logs import EpochLog

logger = logging.getLogger(__name__)


def _align(x, p):
    """Replica uma configuração única para o lote de estados"""
    if x.shape[0] != p.shape[0]:
        if p.shape[0] != 1:
            raise ShapeError(f"{x.shape[0]} states but {p.shape[0]} configurations")
        p = p + np.zeros((x.shape[0], p.shape[1]))
    return p


def _batch(x):
    return x.reshape(1, -1) if x.ndim == 1 else x


@dataclass
class LyapunovNet:
    """V(x, p) = ‖P(p)(x − x*)‖ + V_NN(x, p)²·‖x − x*‖²"""

    p_net: object
    v_net: object
    mode: object

    @property
    def state_dim(self):
        return self.mode.state_dim

    def equilibrium(self, p):
        return self.mode.equilibrium(p)

    def parameters(self):
        return self.p_net.parameters() + self.v_net.parameters()

    def matrix(self, p):
        p = _batch(p)
        n = self.state_dim
        return mlp_forward(self.p_net, self.mode.features_of(p)).reshape(p.shape[0], n, n)

    def value(self, x, p):
        x = _batch(x)
        p = _align(x, _batch(p))
        n = self.state_dim
        d = x - self.mode.equilibrium(p)
        feats = self.mode.features_of(p)
        P = mlp_forward(self.p_net, feats).reshape(x.shape[0], n, n)
        linear = norm((P * d.reshape(x.shape[0], 1, n)).sum(axis=2), axis=1)
        scale = mlp_forward(self.v_net, concat([d, feats], axis=1))[:, 0]
        return linear + scale ** 2 * (d * d).sum(axis=1)

    def save(self, directory):
        directory = Path(directory)
        meta = {"mode": self.mode.name}
        save_checkpoint(self.p_net, directory / f"{self.mode.name}.lyapunov_p.json", "lyapunov_p", meta)
        save_checkpoint(self.v_net, directory / f"{self.mode.name}.lyapunov_v.json", "lyapunov_v", meta)
        return directory

    @classmethod
    def load(cls, directory, mode):
        directory = Path(directory)
        p_net = load_checkpoint(directory / f"{mode.name}.lyapunov_p.json").params
        v_net = load_checkpoint(directory / f"{mode.name}.lyapunov_v.json").params
        return cls(p_net, v_net, mode)


@dataclass
class ControllerNet:
    """
    π(x, p) = c + w·tanh(z), c e w o centro e a meia-largura da caixa de controle.
    Ancorado: z(x, p) − z(x*, p) + atanh((u* − c)/w), logo π(x*, p) = u*(p).
    """

    net: object
    mode: object
    anchored: bool = True

    @property
    def centre(self):
        return 0.5 * (self.mode.control_high + self.mode.control_low)

    @property
    def half_width(self):
        return 0.5 * (self.mode.control_high - self.mode.control_low)

    def parameters(self):
        return self.net.parameters()

    def __call__(self, x, p):
        x = _batch(x)
        p = _align(x, _batch(p))
        d = x - self.mode.equilibrium(p)
        feats = self.mode.features_of(p)
        inputs = concat([d, feats], axis=1)
        if not self.anchored:
            return self.centre + self.half_width * mlp_forward(self.net, inputs)
        z = mlp_forward(self.net, inputs, final_activation=False)
        z0 = mlp_forward(self.net, concat([np.zeros(d.shape), feats], axis=1), final_activation=False)
        ratio = (self.mode.nominal(data_of(p)) - self.centre) / self.half_width
        shift = np.arctanh(np.clip(ratio, -1 + 1e-9, 1 - 1e-9))
        return self.centre + self.half_width * tanh(z - z0 + shift)

    def save(self, directory):
        meta = {"mode": self.mode.name, "anchored": self.anchored}
        return save_checkpoint(self.net, Path(directory) / f"{self.mode.name}.controller.json", "controller", meta)

    @classmethod
    def load(cls, directory, mode):
        ckpt = load_checkpoint(Path(directory) / f"{mode.name}.controller.json")
        return cls(ckpt.params, mode, bool(ckpt.meta.get("anchored", mode.anchored)))


def init_certificate(mode, hidden=(64, 64), rng=None):
    rng = rng if rng is not None else np.random.default_rng(0)
    n, k = mode.state_dim, mode.n_features
    lyap = LyapunovNet(init_mlp(k, n * n, hidden, rng), init_mlp(n + k, 1, hidden, rng), mode)
    ctrl = ControllerNet(init_mlp(n + k, mode.control_dim, hidden, rng, out_activation="tanh"), mode,
                         anchored=mode.anchored and mode.nominal_control is not None)
    return lyap, ctrl


def clf_terms(nets, controller, states, configs, gamma, dt, step=None):
    """ReLU(γV + (V' − V)/Δt) por amostra"""
    step = step or nets.mode.step
    v = nets.value(states, configs)
    x_next = step(states, controller(states, configs), configs, dt)
    v_next = nets.value(x_next, configs)
    return relu(gamma * v + (v_next - v) / dt)


def clf_loss(nets, controller, states, configs, gamma, dt, step=None):
    return clf_terms(nets, controller, states, configs, gamma, dt, step).sum()


@dataclass
class NormBounds:
    alpha: float
    beta: float
    alpha_raw: float
    beta_raw: float


def estimate_norm_bounds(nets, p, n_samples, radius, rng):
    """
    α, β com α‖x − x*‖ ≤ V ≤ β‖x − x*‖ na bola de raio dado, por amostragem:
    α = 0.95·min, β = 1.05·max da razão V/‖x − x*‖.
    """
    p = as_batch(p)
    x_star = data_of(nets.equilibrium(p))
    n = x_star.shape[1]
    direction = rng.normal(size=(int(n_samples), n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(size=(int(n_samples), 1)) ** (1.0 / n)
    offsets = direction * r
    offsets = offsets[np.linalg.norm(offsets, axis=1) > 1e-6]
    states = x_star + offsets
    values = data_of(nets.value(states, p))
    ratio = values / np.linalg.norm(offsets, axis=1)
    alpha_raw, beta_raw = float(ratio.min()), float(ratio.max())
    if alpha_raw <= 0.0:
        raise CertificateDefectError(f"certificate is not positive definite (min V/|x-x*| = {alpha_raw:.3e})")
    return NormBounds(0.95 * alpha_raw, 1.05 * beta_raw, alpha_raw, beta_raw)


@dataclass
class TrainResult:
    lyapunov: LyapunovNet
    controller: ControllerNet
    log: EpochLog


def _rollout_dataset(mode, controller, states, configs, steps, dt):
    rollout = simulate_batch(mode, controller, states, configs, steps, dt)
    visited, index = rollout.visited()
    return visited, configs[index]


def _copy_nets(lyap, ctrl):
    return (LyapunovNet(lyap.p_net.copy(), lyap.v_net.copy(), lyap.mode),
            ControllerNet(ctrl.net.copy(), ctrl.mode, ctrl.anchored))


def train_mode(mode, config=None, rng=None, init=None, diagnostics_dir=None):
    """
    Treina V e π de um modo. A cada época regenera o conjunto de estados com
    rollouts do controlador atual, faz updates_per_epoch passos de RMSProp na perda
    CLF média e mede a perda de validação em rollouts separados.
    """
    config = config or ClfConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    lyap, ctrl = init if init is not None else init_certificate(mode, config.hidden, rng)
    log = EpochLog(f"clf[{mode.name}]")
    if config.max_epochs <= 0:
        return TrainResult(lyap, ctrl, log)

    configs = mode.sample_configs(rng, config.n_states)
    states = mode.sample_states(rng, configs)
    n_val = max(1, int(round(config.validation_fraction * len(states))))
    val_states, val_configs = states[:n_val], configs[:n_val]
    train_states, train_configs = states[n_val:], configs[n_val:]

    params = lyap.parameters() + ctrl.parameters()
    state = OptimizerState.for_params(params, config.learning_rate)
    best, best_nets, waited = np.inf, _copy_nets(lyap, ctrl), 0

    def diverged(reason):
        path = None
        if diagnostics_dir:
            lyap.save(diagnostics_dir)
            path = str(ctrl.save(diagnostics_dir))
        raise TrainingDivergedError(f"{mode.name}: {reason}", path)

    for epoch in range(config.max_epochs):
        data_x, data_p = _rollout_dataset(mode, ctrl, train_states, train_configs, config.rollout_steps, config.dt)
        losses = []
        for _ in range(config.updates_per_epoch):
            if len(data_x) > config.batch_size:
                idx = rng.choice(len(data_x), size=config.batch_size, replace=False)
                bx, bp = data_x[idx], data_p[idx]
            else:
                bx, bp = data_x, data_p
            try:
                loss, grads = value_and_grad(
                    lambda: clf_loss(lyap, ctrl, Tensor(bx), bp, config.gamma, config.dt) / len(bx), params)
            except NonFiniteError as exc:
                diverged(f"non-finite value in {exc.primitive}")
            if not np.isfinite(loss) or loss > config.divergence_threshold:
                diverged(f"loss {loss:.3e} above {config.divergence_threshold:.1e}")
            rmsprop_step(params, grads, state)
            losses.append(loss)

        val_x, val_p = _rollout_dataset(mode, ctrl, val_states, val_configs, config.rollout_steps, config.dt)
        terms = data_of(clf_terms(lyap, ctrl, val_x, val_p, config.gamma, config.dt))
        val_loss = float(terms.mean())
        log.append(epoch=epoch, train_loss=float(np.mean(losses)), val_loss=val_loss,
                   violation_rate=float((terms > 0).mean()), samples=len(data_x))
        if val_loss < best * (1.0 - config.min_improvement):
            best, best_nets, waited = val_loss, _copy_nets(lyap, ctrl), 0
        else:
            waited += 1
        if val_loss == 0.0 or waited >= config.patience:
            break

    lyap, ctrl = best_nets
    logger.info("%s: trained %d epochs, best validation loss %.3e", mode.name, len(log), best)
    return TrainResult(lyap, ctrl, log)
