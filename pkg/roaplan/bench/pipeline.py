"""
Orquestração das fases: treino dos certificados, níveis de RoA, estimadores,
execução nos ambientes e métricas. Os comandos de gerenciamento chamam estas
funções; todos os arquivos de uma fase ficam sob um ArtifactLayout.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from ..baselines import MpcConfig, MpcController, lqr_baseline
from ..certificates import ControllerNet, LyapunovNet, NormBounds, estimate_norm_bounds, train_mode
from ..dynamics.car import CarParams, car_system
from ..dynamics.pogo import PogoParams
from ..dynamics.toy import setpoint_system
from ..dynamics.walker import WalkerParams
from ..exceptions import CertificateDefectError, ConfigError, MissingArtifactError, RoaPlanError
from ..io import read_yaml, write_yaml
from ..roa import (RoAClassifier, RoADataset, RoAEstimator, build_roa_dataset, compare_with_lqr, roa_slice,
                   train_roa)
from ..runtime.apex import ApexDynamicsNet, ApexScenario, apex_system, run_apex_loop
from ..runtime.hybrid import CarScenario, ModeArtifacts, run_hybrid
from ..runtime.walker import WALKER, WalkerScenario, walker_artifacts, walker_system
from .environments import gen_car_maps, gen_gait_schedules, gen_pogo_mazes, read_maps
from .gait import GaitController, GaitLibrary, stride_mode, train_stride_certificate, train_walker_classifier
from .metrics import metrics_of_run

logger = logging.getLogger(__name__)


class ArtifactLayout:
    """Onde cada artefato treinado mora dentro do diretório de artefatos"""

    def __init__(self, root):
        self.root = Path(root)

    @property
    def certificates(self):
        return self.root / "certificates"

    def bounds(self, mode):
        return self.certificates / f"{mode}.bounds.yaml"

    def training_log(self, mode):
        return self.certificates / f"{mode}.training.csv"

    def roa_dataset(self, mode):
        return self.root / "roa" / f"{mode}.levels.csv"

    def roa_estimator(self, mode):
        return self.root / "roa" / f"{mode}.roa.json"

    @property
    def apex_dynamics(self):
        return self.root / "apex_dynamics.json"

    @property
    def gaits(self):
        return self.root / "gaits.yaml"

    @property
    def walker_classifier(self):
        return self.root / "walker.classifier.json"


def system_params(cls, config):
    try:
        return cls(**config.system.params)
    except TypeError as exc:
        raise ConfigError("system.params", str(exc)) from None


def build_system(config, layout=None):
    kind = config.system.kind
    if kind == "car":
        return car_system(tuple(config.system.frictions), system_params(CarParams, config), config.system.dt,
                          tuple(config.system.speed_range))
    if kind == "toy":
        return setpoint_system(dt=config.system.dt)
    if kind == "pogo":
        if layout is None:
            raise RoaPlanError("the pogo system needs the artifact directory holding the apex network")
        return apex_system(ApexDynamicsNet.load(layout.apex_dynamics), system_params(PogoParams, config))
    if kind == "walker":
        grid = config.gait.grid
        return walker_system(system_params(WalkerParams, config), config.gait.dt, (min(grid), max(grid)))
    raise ConfigError("system.kind", f"unknown system '{kind}' (use car, pogo, walker, toy)")


def certified_modes(system):
    """Modos com certificado neural; o do walker é treinado sobre o mapa de passada"""
    return list(system.modes)


def level_set_modes(system):
    """Modos cuja RoA é um nível do certificado (a do walker é o classificador)"""
    return [name for name in certified_modes(system) if name != WALKER]


def _central_config(mode):
    return 0.5 * (mode.config_low + mode.config_high)[None, :]


def train_certificates(system, config, rng, layout):
    results = {}
    layout.certificates.mkdir(parents=True, exist_ok=True)
    for name in certified_modes(system):
        diagnostics = layout.certificates / "diverged"
        if name == WALKER:
            library = GaitLibrary.load(layout.gaits)
            mode = stride_mode(library)
            result = train_stride_certificate(library, config.clf, rng, diagnostics_dir=diagnostics)
        else:
            mode = system.mode(name)
            result = train_mode(mode, config.clf, rng, diagnostics_dir=diagnostics)
        result.lyapunov.save(layout.certificates)
        result.controller.save(layout.certificates)
        result.log.write_csv(layout.training_log(name))
        try:
            bounds = estimate_norm_bounds(result.lyapunov, _central_config(mode), config.roa.norm_samples,
                                          config.roa.norm_radius, rng)
            write_yaml(layout.bounds(name), vars(bounds))
        except CertificateDefectError as exc:
            logger.warning("%s: no norm bounds (%s)", name, exc)
        if name == WALKER:
            classifier, _ = train_walker_classifier(library, config.gait, rng, system_params(WalkerParams, config),
                                                    GaitController(library, result.controller))
            classifier.save(layout.walker_classifier)
        results[name] = result
    return results


def load_certificate(mode, layout):
    return LyapunovNet.load(layout.certificates, mode), ControllerNet.load(layout.certificates, mode)


def estimate_levels(system, config, rng, layout):
    datasets = {}
    for name in level_set_modes(system):
        mode = system.mode(name)
        lyap, ctrl = load_certificate(mode, layout)
        configs = mode.sample_configs(rng, config.roa.n_configs)
        dataset = build_roa_dataset(mode, lyap, ctrl, configs, config.roa, rng)
        path = layout.roa_dataset(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        dataset.write_csv(path)
        datasets[name] = dataset
    return datasets


def fit_estimators(system, config, rng, layout):
    estimators = {}
    for name in level_set_modes(system):
        path = layout.roa_dataset(name)
        if not path.exists():
            raise MissingArtifactError(path, "RoA level dataset")
        estimator = train_roa(RoADataset.read_csv(path), config.roa, rng)
        estimator.save(layout.roa_estimator(name))
        estimators[name] = estimator
    return estimators


def lqr_comparison(system, config, rng, layout):
    """Nível ε-estável e volume do certificado aprendido contra o LQR, na configuração central de cada modo"""
    frames = []
    for name in level_set_modes(system):
        mode = system.mode(name)
        lyap, ctrl = load_certificate(mode, layout)
        lqr_controller, lqr_certificate = lqr_baseline(mode, config.baselines)
        frame = compare_with_lqr(mode, lyap, ctrl, lqr_certificate, lqr_controller, _central_config(mode),
                                 config.roa, rng)
        frame.insert(0, "mode", name)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def write_roa_slices(system, artifacts, layout, resolution=41):
    """Grade {V ≤ c(p)} no plano (x0, x1) de cada modo, na configuração central"""
    paths = []
    for name in level_set_modes(system):
        mode = system.mode(name)
        if mode.state_dim < 2:
            continue
        p = _central_config(mode)
        frame = roa_slice(artifacts[name].lyapunov, artifacts[name].level(p), p, resolution=resolution)
        path = layout.root / "roa" / f"{name}.slice.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        paths.append(path)
    return paths


def load_artifacts(system, layout):
    """ModeArtifacts por modo; falta de qualquer arquivo levanta MissingArtifactError com o caminho"""
    artifacts = {}
    for name in level_set_modes(system):
        mode = system.mode(name)
        lyap, ctrl = load_certificate(mode, layout)
        roa = RoAEstimator.load(layout.roa_estimator(name))
        bounds_path = layout.bounds(name)
        bounds = NormBounds(**read_yaml(bounds_path, "norm bounds")) if bounds_path.exists() else None
        artifacts[name] = ModeArtifacts(lyap, ctrl, roa, bounds)
    if WALKER in system.modes:
        library = GaitLibrary.load(layout.gaits)
        classifier = None
        if layout.walker_classifier.exists():
            classifier = RoAClassifier.load(layout.walker_classifier)
        lyap, stride_net = load_certificate(stride_mode(library), layout)
        artifacts.update(walker_artifacts(library, stride_net, classifier, lyap))
    return artifacts


def generate_environments(config, seed=None):
    kind = config.system.kind
    bench = config.bench
    seed = bench.map_seed if seed is None else seed
    if kind == "car":
        return gen_car_maps(seed, bench.n_maps, bench.n_segments)
    if kind == "pogo":
        return gen_pogo_mazes(seed, bench.n_maps)
    if kind == "walker":
        grid = config.gait.grid
        return gen_gait_schedules(seed, bench.n_maps, bench.n_targets, (min(grid), max(grid)))
    raise ConfigError("system.kind", f"no environments for system '{kind}'")


def load_environments(config):
    """Ambientes do arquivo em artifacts.maps ou gerados a partir de bench.map_seed"""
    kind = config.system.kind
    if config.artifacts.maps:
        file_kind, environments = read_maps(config.artifacts.maps)
        if file_kind != kind:
            raise ConfigError("artifacts.maps", f"map file holds '{file_kind}' environments, system is '{kind}'")
        return environments
    return generate_environments(config)


def baseline_controllers(system, config, method):
    if method == "lqr":
        return {name: lqr_baseline(system.mode(name), config.baselines)[0] for name in level_set_modes(system)}
    if method == "mpc":
        mpc = MpcConfig.from_baselines(config.baselines)
        return {name: MpcController(system.mode(name), mpc, config.execution.dt, config.baselines.replan_every)
                for name in level_set_modes(system)}
    return {}


def run_environment(config, system, artifacts, environment, method, rng, layout=None):
    """Uma execução completa num ambiente (mapa, labirinto ou sequência de marchas)"""
    kind = config.system.kind
    controllers = baseline_controllers(system, config, method) if kind == "car" else {}
    for controller in controllers.values():
        if hasattr(controller, "reset"):
            controller.reset()
    common = dict(planner=config.planner, method=method, controllers=controllers, rng=rng,
                  epsilon=config.roa.epsilon)
    if kind == "car":
        scenario = CarScenario(system, artifacts, environment, system_params(CarParams, config), **common)
        return run_hybrid(scenario, config.execution)
    if kind == "pogo":
        model = ApexDynamicsNet.load(layout.apex_dynamics)
        scenario = ApexScenario(system, artifacts, model, environment, system_params(PogoParams, config),
                                hop_dt=config.apex.dt, **common)
        return run_apex_loop(scenario, config.execution)
    if kind == "walker":
        library = artifacts[WALKER].controller.library
        scenario = WalkerScenario(system, artifacts, library, environment.targets,
                                  system_params(WalkerParams, config),
                                  max_strides=config.execution.max_strides,
                                  max_stride_time=config.gait.max_stride_time,
                                  target_radius=config.execution.target_radius, dt=config.gait.dt, **common)
        run = run_hybrid(scenario, config.execution)
        run.trajectory.meta["map"] = environment.name
        return run
    raise ConfigError("system.kind", f"cannot execute system '{kind}'")


def evaluate(config, system, artifacts, environments, methods, out_dir, layout=None):
    """Todas as combinações ambiente × método; trajetórias e métricas por execução"""
    out_dir = Path(out_dir)
    records, paths = [], []
    for method in methods:
        for index, environment in enumerate(environments):
            rng = np.random.default_rng([config.seed, index])
            run = run_environment(config, system, artifacts, environment, method, rng, layout)
            path = run.write(out_dir / "trajectories" / method / f"{environment.name}.csv")
            paths.append(path)
            record = metrics_of_run(run, config.system.kind)
            record.map, record.method = environment.name, method
            records.append(record)
            logger.info("%s %s: %s", method, environment.name, "valid" if run.trajectory.valid else "invalid")
    return records, paths
