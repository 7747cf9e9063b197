"""
Execução em malha fechada do sistema híbrido com planejamento de configuração a
cada troca de modo.

run_hybrid é genérico; o cenário diz como começar, quando uma troca é iminente
(um passo de Euler à frente contra a guarda), como planejar e saltar, e quais
grandezas auxiliares registrar.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from ..autodiff import concat, data_of
from ..conf import ExecutionConfig, PlannerConfig
from ..dynamics.car import CarParams, car_handover, car_jump, car_pose, clock_guard, overshoot_time
from ..dynamics.hybrid import Trajectory
from ..dynamics.toy import setpoint_jump
from ..exceptions import InvalidDynamicsError, RoaPlanError
from ..planner import (
    SwitchProblem, entering_term, lipschitz_estimate, plan_or_fallback, planner_loss,
    planner_loss_heuristic, switch_condition_check,
)
from ..roa import roa_membership

logger = logging.getLogger(__name__)

METHODS = ("planned", "naive", "lqr", "mpc")


@dataclass
class ModeArtifacts:
    """Certificado, controlador e estimador de RoA de um modo"""

    lyapunov: object = None
    controller: object = None
    roa: object = None
    bounds: object = None
    classifier: object = None

    def level(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return float(data_of(self.roa(data_of(self.lyapunov.mode.features_of(p))))[0])


@dataclass
class Switch:
    mode: str
    state: np.ndarray
    config: np.ndarray
    clock: float = 0.0


@dataclass
class PlanAudit:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def append(self, row):
        self.rows.append(row)

    def to_frame(self):
        return pd.DataFrame(self.rows)

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


@dataclass
class HybridRun:
    trajectory: Trajectory
    audit: PlanAudit

    def write(self, path):
        """Trajetória em path e auditoria do planejador em <path>.audit.csv"""
        path = Path(path)
        self.trajectory.write_csv(path)
        self.audit.write_csv(path.with_suffix(".audit.csv"))
        return path


class Scenario:
    """Base dos cenários: controle, valor do certificado e linha de auditoria"""

    dt = None

    def __init__(self, system, artifacts, planner=None, method="planned", controllers=None, rng=None,
                 epsilon=1e-2):
        if method not in METHODS:
            raise RoaPlanError(f"unknown execution method '{method}' (use {', '.join(METHODS)})")
        self.system = system
        self.artifacts = artifacts
        self.planner = planner or PlannerConfig()
        self.method = method
        self.controllers = controllers or {}
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.epsilon = epsilon

    @property
    def planning(self):
        return self.method == "planned"

    def meta(self):
        return {"method": self.method}

    def control(self, mode, x, p):
        controller = self.controllers.get(mode) or self.artifacts[mode].controller
        return np.asarray(data_of(controller(x[None, :], p[None, :])), dtype=float)[0]

    def value(self, mode, x, p):
        art = self.artifacts.get(mode)
        if art is None or art.lyapunov is None:
            return None
        return float(data_of(art.lyapunov.value(x[None, :], p[None, :]))[0])

    def aux(self, mode, x, p, clock):
        return {}

    def failure(self, mode, x, p, clock, aux):
        return None

    def audit_row(self, t, from_mode, to_mode, x_i, p_i, result, p_j=None, jump=None, x_star=None):
        row = {"t": t, "from_mode": from_mode, "to_mode": to_mode}
        row.update({f"p{k}": v for k, v in enumerate(p_i)})
        row.update(loss=np.nan if result is None else result.loss,
                   feasible=None if result is None else result.feasible,
                   fallback=False if result is None else result.fallback)
        art_i = self.artifacts.get(to_mode)
        if art_i is not None and art_i.roa is not None:
            row["inside"] = bool(roa_membership(art_i.lyapunov, art_i.roa, x_i[None, :], p_i[None, :])[0])
        margins = self.margins(to_mode, x_i, p_i, p_j, jump, x_star)
        row.update(margins)
        return row

    def margins(self, mode_i, x_i, p_i, p_j, jump, x_star):
        """Margens das duas condições de estabilidade na troca, quando há limitantes de norma"""
        empty = {"entering_margin": np.nan, "transition_margin": np.nan, "lipschitz": np.nan}
        if p_j is None or jump is None:
            return empty
        mode_j, p_j = p_j
        art_i, art_j = self.artifacts.get(mode_i), self.artifacts.get(mode_j)
        if art_i is None or art_j is None or art_j.bounds is None or art_i.roa is None or art_j.roa is None:
            return empty
        K = lipschitz_estimate(lambda x, a, b: jump(x, a, b), x_star, p_i, p_j, self.epsilon).K
        report = switch_condition_check(x_i, p_i, p_j, art_i.lyapunov, art_j.lyapunov, art_j.bounds, K,
                                        art_i.level(p_i), art_j.level(p_j), self.epsilon,
                                        lambda a, b: jump(np.repeat(x_star[None, :], len(a), axis=0), a, b))
        return {"entering_margin": report.entering_margin, "transition_margin": report.transition_margin,
                "lipschitz": K}

    def eta_kappa(self, art_j, jump=None, x_star=None, p_i=None, p_j=None):
        """η, κ fixos ou derivados dos limitantes de norma do modo seguinte"""
        if self.planner.eta_mode != "estimated" or art_j is None or art_j.bounds is None:
            return self.planner.eta, self.planner.kappa
        eta = art_j.bounds.alpha / art_j.bounds.beta
        K = 1.0 if jump is None else lipschitz_estimate(jump, x_star, p_i, p_j, self.epsilon).K
        return eta, art_j.bounds.alpha * K * self.epsilon


def run_hybrid(scenario, execution=None):
    """
    Simula até total_time: Euler sob o controlador do modo atual e, quando o
    passo seguinte cruza a guarda, planejamento de p_i e salto. Dinâmica inválida
    trunca a trajetória e a marca inválida.
    """
    execution = execution or ExecutionConfig()
    if execution.total_time <= 0:
        raise RoaPlanError("execution.total_time must be positive")
    dt = scenario.dt or execution.dt
    mode_name, x, p = scenario.start()
    x, p = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
    traj = Trajectory(dt, meta=scenario.meta())
    audit = PlanAudit()
    t, clock = 0.0, 0.0
    control_time, control_calls = 0.0, 0
    finished = False

    for _ in range(int(round(execution.total_time / dt))):
        mode = scenario.system.mode(mode_name)
        started = time.perf_counter()
        u = scenario.control(mode_name, x, p)
        control_time += time.perf_counter() - started
        control_calls += 1
        aux = scenario.aux(mode_name, x, p, clock)
        traj.record(t, mode_name, x, u, scenario.value(mode_name, x, p), aux)
        failed = scenario.failure(mode_name, x, p, clock, aux)
        if failed:
            kind, cause = failed
            traj.add_event(t, kind, mode_name, state=x)
            traj.cause = cause
            finished = True
            break
        try:
            x_next = mode.step(x[None, :], u[None, :], p[None, :], dt)[0]
        except InvalidDynamicsError as exc:
            traj.invalidate(t, mode_name, str(exc))
            finished = True
            break
        if not np.all(np.isfinite(x_next)) or (
                mode.valid is not None and not bool(mode.valid(x_next[None, :], p[None, :])[0])):
            traj.invalidate(t + dt, mode_name, "state left the valid set")
            finished = True
            break
        t += dt
        clock += dt
        if scenario.impending(mode_name, x, x_next, p, clock):
            switch = scenario.switch(t, mode_name, x, x_next, p, clock, audit)
            if switch is None:
                x = x_next
                traj.record(t, mode_name, x, None, scenario.value(mode_name, x, p),
                            scenario.aux(mode_name, x, p, clock))
                traj.add_event(t, "goal", mode_name, state=x)
                finished = True
                break
            traj.add_event(t, "jump", mode_name, switch.mode, switch.state)
            mode_name, x, p, clock = switch.mode, np.asarray(switch.state, dtype=float), \
                np.asarray(switch.config, dtype=float), switch.clock
            continue
        x = x_next

    if not finished and (not traj.times or t > traj.times[-1]):
        traj.record(t, mode_name, x, None, scenario.value(mode_name, x, p),
                    scenario.aux(mode_name, x, p, clock))
    traj.meta["step_runtime"] = control_time / max(control_calls, 1)
    traj.meta["switches"] = len(audit)
    return HybridRun(traj, audit)


class SetpointScenario(Scenario):
    """
    Dois modos em coordenadas de erro que se alternam a cada hold_time. A cada
    troca o planejador aproxima o setpoint do alvo da lista sem tirar o estado de
    entrada da RoA; o alvo avança quando é alcançado.
    """

    def __init__(self, system, artifacts, targets, hold_time=1.0, x0=0.0, **kwargs):
        super().__init__(system, artifacts, **kwargs)
        self.targets = [float(v) for v in np.atleast_1d(targets)]
        if not self.targets:
            raise RoaPlanError("setpoint schedule is empty")
        self.hold_time = hold_time
        self.x0 = float(x0)
        self.target_index = 1
        self.order = list(system.modes)

    @property
    def finished(self):
        return self.target_index >= len(self.targets)

    def start(self):
        self.target_index = 1
        return self.order[0], np.array([self.x0]), np.array([self.targets[0]])

    def impending(self, mode, x, x_next, p, clock):
        return not self.finished and clock >= self.hold_time - 1e-12

    def switch(self, t, mode, x_prev, x_exit, p_k, clock, audit):
        target = self.targets[self.target_index]
        mode_i = self.order[(self.order.index(mode) + 1) % len(self.order)]
        result = None
        if self.planning:
            art = self.artifacts[mode_i]
            spec = self.system.mode(mode_i)
            entering = lambda p: setpoint_jump(x_exit[None, :], None, p_k[None, :], p)
            problem = SwitchProblem(
                configure=lambda z: z,
                loss=lambda p: planner_loss_heuristic(entering, p, np.array([[target]]), art.lyapunov, art.roa,
                                                      self.planner.heuristic_weight),
                residual=lambda p: entering_term(entering, p, art.lyapunov, art.roa),
                lower=spec.config_low, upper=spec.config_high, nominal=[target],
                label=f"{mode}->{mode_i}")
            result = plan_or_fallback(problem, self.planner, self.rng)
            p_i = np.asarray(result.p_i, dtype=float)
        else:
            p_i = np.array([target])
        if abs(p_i[0] - target) < 1e-9:
            self.target_index += 1
        x_i = np.asarray(setpoint_jump(x_exit[None, :], None, p_k[None, :], p_i[None, :]))[0]
        audit.append(self.audit_row(t, mode, mode_i, x_i, p_i, result))
        return Switch(mode_i, x_i, p_i)


class CarScenario(Scenario):
    """
    Percurso de um mapa: um segmento por modo (o modo é escolhido pelo atrito).
    Na troca o planejador escolhe o waypoint e a velocidade de referência do
    segmento seguinte dentro da caixa da faixa; o início do segmento é o waypoint
    planejado do anterior.
    """

    def __init__(self, system, artifacts, car_map, params=None, x0=None, **kwargs):
        super().__init__(system, artifacts, **kwargs)
        self.map = car_map
        self.params = params or CarParams()
        self.x0 = np.zeros(7) if x0 is None else np.asarray(x0, dtype=float)
        self.modes = []
        for seg in car_map.segments:
            name = f"car-mu{seg.mu:g}"
            system.mode(name)
            self.modes.append(name)
        self.segment = 0

    def meta(self):
        return dict(super().meta(), benchmark="car", map=self.map.name, total_length=float(self.map.total_length),
                    lane_half_width=self.params.lane_half_width)

    def start(self):
        self.segment = 0
        return self.modes[0], self.x0.copy(), self.map.config(0)

    def impending(self, mode, x, x_next, p, clock):
        return bool(clock_guard(x[None, :], x_next[None, :], p[None, :], clock)[0])

    def aux(self, mode, x, p, clock):
        X, Y, hdg = car_pose(x[None, :], p[None, :], clock)
        lateral, progress = self.map.locate(float(X[0]), float(Y[0]), self.segment)
        return {"segment": self.segment, "X": float(X[0]), "Y": float(Y[0]), "heading": float(hdg[0]),
                "lateral": lateral, "progress": progress, "sq_error": float(x[0] ** 2 + x[1] ** 2)}

    def failure(self, mode, x, p, clock, aux):
        if abs(aux["lateral"]) > self.params.lane_half_width:
            return "out_of_lane", f"lateral deviation {aux['lateral']:.2f} m on segment {self.segment}"
        return None

    def speed_bounds(self, mode):
        spec = self.system.mode(mode)
        return float(spec.config_low[4]), float(spec.config_high[4])

    def problem(self, x_exit, p_k, excess, i):
        mode_i = self.modes[i]
        art_i = self.artifacts[mode_i]
        env_i = self.map.config(i)
        s_i, mu_i = p_k[2:4], env_i[5]
        v_lo, v_hi = self.speed_bounds(mode_i)
        box = self.planner.lane_box
        lower = [env_i[2] - box, env_i[3] - box, v_lo]
        upper = [env_i[2] + box, env_i[3] + box, v_hi]

        def configure(z):
            rows = z.shape[0]
            return concat([np.repeat(s_i[None, :], rows, axis=0), z, np.full((rows, 1), mu_i)], axis=1)

        entering = lambda p: car_handover(x_exit[None, :], p_k[None, :], p, excess)
        if i + 1 >= len(self.modes):
            loss = lambda p: entering_term(entering, p, art_i.lyapunov, art_i.roa)
        else:
            art_j = self.artifacts[self.modes[i + 1]]
            tail = self.map.config(i + 1)[None, 2:]
            next_config = lambda p: concat([p[:, 2:4], np.repeat(tail, p.shape[0], axis=0)], axis=1)
            jump = lambda a, b: car_jump(np.zeros((b.shape[0], 7)), a, b)
            nominal_i = configure(np.array([env_i[2:5]]))
            eta, kappa = self.eta_kappa(art_j, lambda x, a, b: car_jump(x, a, b), np.zeros(7), nominal_i,
                                        next_config(nominal_i))
            loss = lambda p: planner_loss(entering, p, next_config, art_i.lyapunov, art_j.lyapunov, art_i.roa,
                                          jump, eta, kappa, roa_j=art_j.roa)
        return SwitchProblem(configure, loss, lower, upper, env_i[2:5],
                             label=f"{self.map.name} segment {i}")

    def switch(self, t, mode, x_prev, x_exit, p_k, clock, audit):
        k = self.segment
        if k + 1 >= len(self.modes):
            return None
        i = k + 1
        excess = overshoot_time(p_k[None, :], clock)
        env_i = self.map.config(i)
        result = None
        if self.planning:
            result = plan_or_fallback(self.problem(x_exit, p_k, excess, i), self.planner, self.rng)
            p_i = np.asarray(result.p_i, dtype=float)
        else:
            p_i = np.concatenate([p_k[2:4], env_i[2:]])
        x_i = np.asarray(data_of(car_handover(x_exit[None, :], p_k[None, :], p_i[None, :], excess)))[0]
        p_j = None
        if i + 1 < len(self.modes):
            p_j = (self.modes[i + 1], np.concatenate([p_i[2:4], self.map.config(i + 1)[2:]]))
        audit.append(dict(self.audit_row(t, mode, self.modes[i], x_i, p_i, result, p_j,
                                         lambda x, a, b: car_jump(x, a, b), np.zeros(7)), segment=i))
        self.segment = i
        return Switch(self.modes[i], x_i, p_i, clock=excess)
