"""
Configuração das execuções.

Ordem de precedência: perfil embutido (desk / paper) → arquivo YAML → flags da
linha de comando. Chaves desconhecidas ou valores de tipo errado levantam
ConfigError com o caminho pontuado da chave.
"""

import copy
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .exceptions import ConfigError


@dataclass
class SystemConfig:
    kind: str = "car"
    dt: float = 0.01
    guard_tol: float = 1e-6
    frictions: tuple = (1.0, 0.1)
    speed_range: tuple = (3.0, 10.0)
    params: dict = field(default_factory=dict)


@dataclass
class ClfConfig:
    hidden: tuple = (64, 64)
    n_states: int = 200
    validation_fraction: float = 0.1
    max_epochs: int = 50
    updates_per_epoch: int = 20
    batch_size: int = 1024
    learning_rate: float = 1e-4
    gamma: float = 1.0
    dt: float = 0.01
    rollout_steps: int = 100
    patience: int = 20
    min_improvement: float = 0.01
    divergence_threshold: float = 1e6


@dataclass
class RoaConfig:
    epsilon: float = 1e-2
    n_samples: int = 1000
    horizon: int = 100
    dt: float = 0.01
    tolerance: float = 0.0
    n_configs: int = 20
    hidden: tuple = (64, 64)
    iterations: int = 2000
    learning_rate: float = 1e-4
    lr_final: float = 0.0
    norm_samples: int = 2000
    norm_radius: float = 1.0


@dataclass
class PlannerConfig:
    hypotheses: int = 200
    steps: int = 5
    learning_rate: float = 0.05
    eta: float = 0.9
    kappa: float = 1e-2
    feasibility_tol: float = 1e-6
    heuristic_weight: float = 1.0
    classifier_threshold: float = 0.9
    lane_box: float = 2.0
    eta_mode: str = "fixed"


@dataclass
class ExecutionConfig:
    method: str = "planned"
    total_time: float = 60.0
    dt: float = 0.01
    max_hops: int = 60
    max_strides: int = 40
    target_radius: float = 1e-2


@dataclass
class BaselineConfig:
    q_weights: tuple = (1.0, 1.0, 0.1, 1.0, 1.0, 0.1, 0.1)
    r_weights: tuple = (1.0, 1.0)
    mpc_horizon: int = 20
    mpc_iterations: int = 30
    mpc_learning_rate: float = 0.1
    replan_every: int = 5


@dataclass
class AblationConfig:
    etas: tuple = (0.5, 0.7, 0.9, 1.0)
    kappas: tuple = (0.0, 1e-3, 1e-2, 1e-1)
    dts: tuple = (0.005, 0.01, 0.02)


@dataclass
class ApexConfig:
    n_transitions: int = 2000
    dt: float = 1e-3
    hidden: tuple = (64, 64)
    iterations: int = 3000
    learning_rate: float = 1e-2
    lr_final: float = 1e-4
    batch_size: int = 256
    holdout_fraction: float = 0.2


@dataclass
class GaitConfig:
    grid: tuple = (0.04, 0.06, 0.08, 0.10, 0.12, 0.13, 0.14, 0.16, 0.18)
    amplitude: float = 0.15
    kp: float = 200.0
    kd: float = 20.0
    dt: float = 1e-3
    max_stride_time: float = 3.0
    tolerance: float = 1e-6
    label_strides: int = 10
    label_radius: float = 1e-2
    label_samples: int = 400
    classifier_iterations: int = 2000
    classifier_hidden: tuple = (32, 32)


@dataclass
class BenchConfig:
    n_maps: int = 5
    n_segments: int = 10
    map_seed: int = 0
    n_targets: int = 3
    map_index: int = 0


@dataclass
class ArtifactsConfig:
    dir: str = ""
    maps: str = ""
    gaits: str = ""


@dataclass
class RunConfig:
    profile: str = "desk"
    seed: int = 0
    out: str = ""
    system: SystemConfig = field(default_factory=SystemConfig)
    clf: ClfConfig = field(default_factory=ClfConfig)
    roa: RoaConfig = field(default_factory=RoaConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    apex: ApexConfig = field(default_factory=ApexConfig)
    gait: GaitConfig = field(default_factory=GaitConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    artifacts: ArtifactsConfig = field(default_factory=ArtifactsConfig)

    def to_dict(self):
        return asdict(self)


PROFILES = {
    "desk": {
        "clf": {"hidden": [64, 64], "n_states": 200, "max_epochs": 50, "updates_per_epoch": 20},
        "roa": {"n_samples": 1000, "iterations": 2000, "hidden": [64, 64]},
        "planner": {"hypotheses": 200, "steps": 5},
        "bench": {"n_maps": 5},
    },
    "paper": {
        "clf": {"hidden": [256, 256], "n_states": 1000, "max_epochs": 1000, "updates_per_epoch": 500,
                "learning_rate": 1e-4},
        "roa": {"n_samples": 10000, "iterations": 50000, "hidden": [256, 256], "learning_rate": 1e-4},
        "planner": {"hypotheses": 1000, "steps": 5, "learning_rate": 0.05},
        "bench": {"n_maps": 25},
    },
}


def _merge(base, update):
    out = copy.deepcopy(base)
    for key, value in (update or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _default_of(f):
    if f.default is not MISSING:
        return f.default
    return f.default_factory()


def _coerce(value, default, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        if default:
            return tuple(_coerce(v, default[0], f"{path}[{i}]") for i, v in enumerate(value))
        return tuple(value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {value!r}")
        return dict(value)
    return value


def build_section(cls, data, prefix=""):
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", "expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in known:
            raise ConfigError(path, "unknown key")
        default = _default_of(known[key])
        if is_dataclass(default):
            kwargs[key] = build_section(type(default), value, path)
        else:
            kwargs[key] = _coerce(value, default, path)
    return cls(**kwargs)


def read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    return data


def load_config(path=None, profile=None, seed=None, out=None, overrides=None, default_profile="desk",
                default_seed=0):
    """Resolve a configuração completa de uma execução"""
    file_data = read_config_file(path) if path else {}
    profile = profile or file_data.get("profile") or default_profile
    if profile not in PROFILES:
        raise ConfigError("profile", f"unknown profile '{profile}' (use {', '.join(PROFILES)})")
    merged = _merge(PROFILES[profile], file_data)
    merged = _merge(merged, overrides or {})
    merged["profile"] = profile
    if seed is not None:
        merged["seed"] = seed
    elif "seed" not in merged:
        merged["seed"] = int(default_seed)
    if out is not None:
        merged["out"] = str(out)
    return build_section(RunConfig, merged)
