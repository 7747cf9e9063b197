"""
Pogobot ápice a ápice: rede que aprende o mapa de retorno do ápice, o modo
discreto certificado sobre ela e a execução num labirinto com replay da
dinâmica completa para detectar colisões.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import (
    Normalizer, concat, data_of, fit_regression, init_mlp, load_checkpoint, mlp_forward, save_checkpoint,
)
from ..conf import ApexConfig, ExecutionConfig
from ..dynamics.hybrid import HybridSystem, ModeSpec, Trajectory, as_batch
from ..dynamics.pogo import PogoParams, simulate_hop
from ..exceptions import RoaPlanError, ShapeError
from ..planner import SwitchProblem, entering_term, plan_or_fallback, planner_loss_heuristic
from .hybrid import HybridRun, PlanAudit, Scenario

logger = logging.getLogger(__name__)

APEX = "apex"
INPUTS = ("h", "vx", "force", "theta")
OUTPUTS = ("h_next", "vx_next", "distance")


@dataclass
class ApexDynamicsNet:
    """(h, ẋ, F, θ) → (h', ẋ', distância do salto), com entradas e saídas padronizadas"""

    net: object
    inputs: Normalizer
    outputs: Normalizer

    def __call__(self, z):
        return self.outputs.invert(mlp_forward(self.net, self.inputs(z)))

    def predict(self, z):
        return np.asarray(data_of(self(as_batch(z, len(INPUTS)))))

    def save(self, path):
        meta = {"inputs": self.inputs.to_dict(), "outputs": self.outputs.to_dict()}
        return save_checkpoint(self.net, path, "apex_dynamics", meta)

    @classmethod
    def load(cls, path):
        ckpt = load_checkpoint(path)
        return cls(ckpt.params, Normalizer.from_dict(ckpt.meta["inputs"]), Normalizer.from_dict(ckpt.meta["outputs"]))


@dataclass
class ApexFit:
    net: ApexDynamicsNet
    report: dict = field(default_factory=dict)


def train_apex_dynamics(inputs, outputs, config=None, rng=None):
    """Regressão MSE; o relatório traz o RMSE por saída no conjunto separado"""
    config = config or ApexConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    inputs = np.asarray(inputs, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    if inputs.ndim != 2 or outputs.ndim != 2 or len(inputs) != len(outputs):
        raise ShapeError(f"apex data: inputs {inputs.shape} and outputs {outputs.shape} do not pair up")
    order = rng.permutation(len(inputs))
    n_hold = int(round(config.holdout_fraction * len(inputs)))
    hold, train = order[:n_hold], order[n_hold:]
    if not n_hold:
        hold = train
    in_norm, out_norm = Normalizer.fit(inputs[train]), Normalizer.fit(outputs[train])
    net = init_mlp(inputs.shape[1], outputs.shape[1], config.hidden, rng)
    history = fit_regression(net, in_norm(inputs[train]), out_norm(outputs[train]), config.iterations,
                             config.learning_rate, rng, batch_size=config.batch_size,
                             lr_final=config.lr_final or None)
    model = ApexDynamicsNet(net, in_norm, out_norm)
    error = model.predict(inputs[hold]) - outputs[hold]
    rmse = np.sqrt((error ** 2).mean(axis=0))
    spread = np.ptp(outputs, axis=0)
    report = {
        "n_train": int(len(train)),
        "n_holdout": int(n_hold),
        "final_loss": float(history[-1]) if history else None,
        "holdout_rmse": dict(zip(OUTPUTS, rmse.tolist())),
        "holdout_relative": dict(zip(OUTPUTS, (rmse / np.where(spread > 0, spread, 1.0)).tolist())),
    }
    logger.info("apex dynamics: holdout RMSE %s", np.round(rmse, 4).tolist())
    return ApexFit(model, report)


def apex_mode(model, params=None, config_low=(0.6, 0.4), config_high=(2.2, 1.6), sample_radius=(0.3, 0.5)):
    """
    Modo discreto de um salto por passo. Estado (h − h_ref, ẋ − v_ref),
    configuração p = (h_ref, v_ref), controle (F, θ).
    """
    params = params or PogoParams()
    radius = np.asarray(sample_radius, dtype=float)

    def step_map(x, u, p):
        absolute = x + p
        out = model(concat([absolute, u], axis=1))
        return out[:, :2] - p

    return ModeSpec(
        name=APEX, state_dim=2, control_dim=2, config_dim=2,
        equilibrium=lambda p: np.zeros((len(p), 2)),
        control_low=[-params.max_force, -params.max_angle], control_high=[params.max_force, params.max_angle],
        config_low=config_low, config_high=config_high,
        sample_low=-radius, sample_high=radius,
        step_map=step_map,
        valid=lambda x, p: np.abs(np.asarray(x)).max(axis=1) < 5.0,
        anchored=False,
    )


def apex_system(model, params=None):
    return HybridSystem({APEX: apex_mode(model, params)}, dt=1.0)


class ApexScenario(Scenario):
    """Labirinto de segmentos: a configuração de cada segmento é escolhida no último ápice antes dele"""

    def __init__(self, system, artifacts, model, maze, params=None, hop_dt=1e-3, **kwargs):
        super().__init__(system, artifacts, **kwargs)
        if self.method in ("lqr", "mpc") and APEX not in self.controllers:
            raise RoaPlanError(f"method '{self.method}' needs an explicit apex controller")
        self.model = model
        self.maze = maze
        self.params = params or PogoParams()
        self.hop_dt = hop_dt

    def meta(self):
        return dict(super().meta(), benchmark="pogo", map=self.maze.name, total_length=self.maze.total_length)

    def box(self, j):
        spec = self.system.mode(APEX)
        seg = self.maze.segments[j]
        h_lo = max(float(spec.config_low[0]), self.params.l0 + 0.1)
        h_hi = max(min(float(spec.config_high[0]), seg.clearance - 0.25), h_lo)
        return [h_lo, float(spec.config_low[1])], [h_hi, float(spec.config_high[1])]

    def plan_segment(self, t, k, j, predicted, audit):
        """predicted = (h', ẋ') previstos acima do chão do segmento k"""
        arrival = np.array([[predicted[0] + self.maze.segments[k].floor - self.maze.segments[j].floor,
                             predicted[1]]])
        nominal = self.maze.config(j, self.params)
        result = None
        if self.planning:
            art = self.artifacts[APEX]
            lower, upper = self.box(j)
            entering = lambda p: arrival - p
            problem = SwitchProblem(
                configure=lambda z: z,
                loss=lambda p: planner_loss_heuristic(entering, p, nominal[None, :], art.lyapunov, art.roa,
                                                      self.planner.heuristic_weight),
                residual=lambda p: entering_term(entering, p, art.lyapunov, art.roa),
                lower=lower, upper=upper, nominal=nominal, label=f"{self.maze.name} segment {j}")
            result = plan_or_fallback(problem, self.planner, self.rng)
            p_j = np.asarray(result.p_i, dtype=float)
        else:
            p_j = nominal
        audit.append(dict(self.audit_row(t, APEX, APEX, arrival[0] - p_j, p_j, result), segment=j))
        return p_j


def run_apex_loop(scenario, execution=None):
    """
    Malha fechada ápice a ápice. A rede prevê o próximo ápice; se ele cai no
    segmento seguinte, a configuração desse segmento é planejada agora. O salto é
    então reproduzido na dinâmica completa, com chão e teto do labirinto.
    """
    execution = execution or ExecutionConfig()
    maze, params = scenario.maze, scenario.params
    traj = Trajectory(scenario.hop_dt, meta=scenario.meta())
    audit = PlanAudit()
    if not maze.segments:
        return HybridRun(traj, audit)
    k = 0
    p = maze.config(0, params)
    state = np.array([0.0, p[1], maze.segments[0].floor + p[0], 0.0])
    planned = {}
    t = 0.0
    finished = False
    control_time, control_calls = 0.0, 0

    for _ in range(int(execution.max_hops)):
        seg = maze.segments[k]
        h = state[2] - seg.floor
        e = np.array([h - p[0], state[1] - p[1]])
        started = time.perf_counter()
        u = scenario.control(APEX, e, p)
        control_time += time.perf_counter() - started
        control_calls += 1
        traj.record(t, APEX, state, u, scenario.value(APEX, e, p),
                    {"segment": k, "h": h, "h_ref": p[0], "v_ref": p[1], "v_env": seg.v_ref,
                     "vel_error": abs(state[1] - seg.v_ref), "progress": min(state[0], maze.total_length)})
        if state[0] >= maze.total_length:
            traj.add_event(t, "goal", APEX, state=state)
            finished = True
            break
        predicted = scenario.model.predict([[h, state[1], u[0], u[1]]])[0]
        j = maze.segment_index(state[0] + predicted[2])
        if j > k and j not in planned:
            planned[j] = scenario.plan_segment(t, k, j, predicted, audit)
        hop = simulate_hop(state, u, params, scenario.hop_dt, floor=maze.floor_at, ceiling=maze.ceiling_at, t0=t)
        if hop.collision:
            event = next((ev for ev in hop.events if ev.kind in ("collision", "invalid")), None)
            traj.add_event(t if event is None else event.t, "collision", APEX,
                           state=None if event is None else event.state)
            traj.cause = hop.cause or "head touched the ceiling"
            finished = True
            break
        if not hop.valid:
            traj.invalidate(t, APEX, hop.cause)
            finished = True
            break
        state, t = hop.apex, t + hop.duration
        landed = maze.segment_index(state[0])
        if landed != k:
            p_next = planned.get(landed)
            if p_next is None:
                p_next = maze.config(landed, params)
                logger.warning("%s: apex reached segment %d without a plan, using the nominal configuration",
                               maze.name, landed)
                error = np.array([state[2] - maze.segments[landed].floor - p_next[0], state[1] - p_next[1]])
                audit.append(dict(scenario.audit_row(t, APEX, APEX, error, p_next, None), segment=landed))
            traj.add_event(t, "jump", APEX, APEX, state)
            k, p = landed, p_next

    if not finished:
        traj.cause = traj.cause or f"hop budget of {execution.max_hops} exhausted"
    traj.meta["step_runtime"] = control_time / max(control_calls, 1)
    traj.meta["switches"] = len(audit)
    return HybridRun(traj, audit)
