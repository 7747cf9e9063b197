"""
Estimativa da região de atração: nível ε-estável máximo por amostragem,
regressão R_NN(p) sobre as características da configuração e o classificador
usado pelo walker.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .autodiff import (
    Normalizer, concat, data_of, fit_regression, init_mlp, load_checkpoint, mlp_forward, relu,
    save_checkpoint,
)
from .conf import RoaConfig
from .dynamics.hybrid import as_batch, simulate_batch
from .exceptions import RoaPlanError

logger = logging.getLogger(__name__)


@dataclass
class StableLevel:
    c_star: float
    values: np.ndarray
    success: np.ndarray
    final_distance: np.ndarray

    @property
    def n_samples(self):
        return len(self.values)

    @property
    def successes(self):
        return int(self.success.sum())


def epsilon_success(mode, controller, states, configs, epsilon, horizon, dt):
    """Sucesso: rollout válido cujo estado final fica na ε-bola de x*(p)"""
    rollout = simulate_batch(mode, controller, states, configs, horizon, dt)
    x_star = data_of(mode.equilibrium(configs))
    distance = np.linalg.norm(rollout.final - x_star, axis=1)
    distance[~rollout.valid] = np.inf
    return distance <= epsilon, distance


def level_from_ledger(values, success, tolerance=0.0):
    """
    Maior valor v tal que as amostras com V ≤ v tiveram sucesso (com fração de
    falhas até tolerance) e a própria amostra em v teve sucesso.
    """
    order = np.argsort(values, kind="stable")
    ok = np.asarray(success, dtype=bool)[order]
    fails = np.cumsum(~ok)
    admissible = ok & (fails <= tolerance * np.arange(1, len(ok) + 1))
    if not admissible.any():
        return 0.0
    return float(np.asarray(values)[order][np.flatnonzero(admissible)[-1]])


def max_stable_level(mode, nets, controller, p, epsilon, n_samples, horizon, dt, rng, tolerance=0.0, states=None):
    if states is None and int(n_samples) < 1:
        raise RoaPlanError(f"{mode.name}: the level sweep needs at least one sample, got {n_samples}")
    p = as_batch(p, mode.config_dim)
    configs = np.repeat(p, int(n_samples), axis=0) if len(p) == 1 else p
    states = mode.sample_states(rng, configs) if states is None else as_batch(states, mode.state_dim)
    if not len(states):
        raise RoaPlanError(f"{mode.name}: the level sweep needs at least one sample")
    values = data_of(nets.value(states, configs))
    success, distance = epsilon_success(mode, controller, states, configs, epsilon, horizon, dt)
    if not success.any():
        logger.warning("%s: no sampled state reached the %.0e-ball; level set index is 0", mode.name, epsilon)
    return StableLevel(level_from_ledger(values, success, tolerance), values, success, distance)


@dataclass
class RoAEntry:
    mode: str
    config: np.ndarray
    features: np.ndarray
    c_star: float
    n_samples: int
    epsilon: float
    successes: int


@dataclass
class RoADataset:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def add(self, entry):
        self.entries.append(entry)

    def extend(self, other):
        self.entries.extend(other.entries)
        return self

    def features(self):
        return np.array([e.features for e in self.entries])

    def targets(self):
        return np.array([e.c_star for e in self.entries])

    def to_frame(self):
        rows = []
        for e in self.entries:
            row = {"mode": e.mode}
            row.update({f"p{i}": v for i, v in enumerate(e.config)})
            row.update({f"f{i}": v for i, v in enumerate(e.features)})
            row.update(c_star=e.c_star, n_samples=e.n_samples, epsilon=e.epsilon, successes=e.successes)
            rows.append(row)
        return pd.DataFrame(rows)

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False)
        return path

    @classmethod
    def read_csv(cls, path):
        frame = pd.read_csv(path)
        p_cols = [c for c in frame.columns if c.startswith("p") and c[1:].isdigit()]
        f_cols = [c for c in frame.columns if c.startswith("f") and c[1:].isdigit()]
        dataset = cls()
        for _, row in frame.iterrows():
            dataset.add(RoAEntry(row["mode"], row[p_cols].to_numpy(dtype=float), row[f_cols].to_numpy(dtype=float),
                                 float(row["c_star"]), int(row["n_samples"]), float(row["epsilon"]),
                                 int(row["successes"])))
        return dataset


def build_roa_dataset(mode, nets, controller, configs, config=None, rng=None):
    config = config or RoaConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    dataset = RoADataset()
    for p in as_batch(configs, mode.config_dim):
        level = max_stable_level(mode, nets, controller, p, config.epsilon, config.n_samples,
                                 config.horizon, config.dt, rng, config.tolerance)
        dataset.add(RoAEntry(mode.name, p.copy(), data_of(mode.features_of(p[None, :]))[0],
                             level.c_star, level.n_samples, config.epsilon, level.successes))
        logger.info("%s p=%s c*=%.4g (%d/%d successes)", mode.name, np.round(p, 3).tolist(),
                    level.c_star, level.successes, level.n_samples)
    return dataset


@dataclass
class RoAEstimator:
    """R_NN: características da configuração → índice do nível, sempre ≥ 0"""

    net: object
    normalizer: Normalizer
    scale: float = 1.0

    def __call__(self, features):
        features = features.reshape(1, -1) if features.ndim == 1 else features
        return relu(self.scale * mlp_forward(self.net, self.normalizer(features))[:, 0])

    def save(self, path):
        meta = {"normalizer": self.normalizer.to_dict(), "scale": self.scale}
        return save_checkpoint(self.net, path, "roa_estimator", meta)

    @classmethod
    def load(cls, path):
        ckpt = load_checkpoint(path)
        return cls(ckpt.params, Normalizer.from_dict(ckpt.meta["normalizer"]), float(ckpt.meta["scale"]))


def train_roa(dataset, config=None, rng=None):
    """Regressão MSE de c* sobre as características (RMSProp)"""
    config = config or RoaConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    features, targets = dataset.features(), dataset.targets()
    if len(np.unique(features, axis=0)) < 2:
        logger.warning("RoA dataset covers a single configuration; the estimator will be constant")
    normalizer = Normalizer.fit(features)
    scale = float(np.abs(targets).max()) or 1.0
    net = init_mlp(features.shape[1], 1, config.hidden, rng)
    history = fit_regression(net, normalizer(features), targets / scale, config.iterations,
                             config.learning_rate, rng, lr_final=config.lr_final or None)
    if history:
        logger.info("RoA estimator: %d iterations, final MSE %.3e", len(history), history[-1] * scale ** 2)
    return RoAEstimator(net, normalizer, scale)


def roa_membership(nets, roa, x, p):
    """V(x, p) ≤ R_NN(p)"""
    x, p = as_batch(x), as_batch(p)
    if len(p) == 1 and len(x) > 1:
        p = np.repeat(p, len(x), axis=0)
    level = data_of(roa(data_of(nets.mode.features_of(p))))
    return data_of(nets.value(x, p)) <= level


INSIDE_TARGET, OUTSIDE_TARGET = 0.8, 1.2
INSIDE_THRESHOLD, OUTSIDE_THRESHOLD = 0.9, 1.1


@dataclass
class RoAClassifier:
    """Pontua (estado, características): < 0.9 dentro, > 1.1 fora, entre os dois abstém"""

    net: object
    normalizer: Normalizer

    def score(self, x, features):
        x = x.reshape(1, -1) if x.ndim == 1 else x
        features = features.reshape(1, -1) if features.ndim == 1 else features
        if features.shape[0] != x.shape[0]:
            features = features + np.zeros((x.shape[0], features.shape[1]))
        return mlp_forward(self.net, self.normalizer(concat([x, features], axis=1)))[:, 0]

    @staticmethod
    def decide(score):
        score = np.asarray(score, dtype=float)
        return np.where(score < INSIDE_THRESHOLD, 1, np.where(score > OUTSIDE_THRESHOLD, -1, 0))

    def save(self, path):
        return save_checkpoint(self.net, path, "roa_classifier", {"normalizer": self.normalizer.to_dict()})

    @classmethod
    def load(cls, path):
        ckpt = load_checkpoint(path)
        return cls(ckpt.params, Normalizer.from_dict(ckpt.meta["normalizer"]))


def train_roa_classifier(states, features, inside, hidden=(32, 32), iterations=2000, learning_rate=1e-3,
                         rng=None, lr_final=None):
    """Regressão para 0.8 (dentro) / 1.2 (fora)"""
    rng = rng if rng is not None else np.random.default_rng(0)
    inputs = np.concatenate([as_batch(states), as_batch(features)], axis=1)
    targets = np.where(np.asarray(inside, dtype=bool), INSIDE_TARGET, OUTSIDE_TARGET)
    normalizer = Normalizer.fit(inputs)
    net = init_mlp(inputs.shape[1], 1, hidden, rng)
    fit_regression(net, normalizer(inputs), targets, iterations, learning_rate, rng, lr_final=lr_final)
    return RoAClassifier(net, normalizer)


def volume_fraction(certificate, level, mode, p, n_samples, rng):
    """Fração da caixa de amostragem do modo coberta por {V ≤ level}"""
    configs = np.repeat(as_batch(p, mode.config_dim), int(n_samples), axis=0)
    states = mode.sample_states(rng, configs)
    return float((data_of(certificate.value(states, configs)) <= level).mean())


def compare_with_lqr(mode, nets, controller, lqr_certificate, lqr_controller, p, config=None, rng=None):
    """Nível ε-estável e volume amostrado do certificado aprendido contra o do LQR"""
    config = config or RoaConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    rows = []
    for name, cert, ctrl in (("learned", nets, controller), ("lqr", lqr_certificate, lqr_controller)):
        level = max_stable_level(mode, cert, ctrl, p, config.epsilon, config.n_samples, config.horizon,
                                 config.dt, rng, config.tolerance)
        rows.append({"certificate": name, "c_star": level.c_star, "successes": level.successes,
                     "volume_fraction": volume_fraction(cert, level.c_star, mode, p, config.n_samples, rng)})
    return pd.DataFrame(rows)


def roa_slice(nets, level, p, dims=(0, 1), ranges=((-2.0, 2.0), (-2.0, 2.0)), resolution=41):
    """Grade de pertinência {V ≤ level} num plano do estado (demais coordenadas em x*)"""
    p = as_batch(p)
    x_star = data_of(nets.equilibrium(p))[0]
    a = np.linspace(*ranges[0], resolution)
    b = np.linspace(*ranges[1], resolution)
    ga, gb = np.meshgrid(a, b, indexing="ij")
    states = np.repeat(x_star[None, :], ga.size, axis=0)
    states[:, dims[0]] += ga.reshape(-1)
    states[:, dims[1]] += gb.reshape(-1)
    values = data_of(nets.value(states, np.repeat(p, len(states), axis=0)))
    return pd.DataFrame({f"x{dims[0]}": states[:, dims[0]], f"x{dims[1]}": states[:, dims[1]],
                         "V": values, "inside": values <= level})
