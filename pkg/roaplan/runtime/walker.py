"""
Troca de marchas do compass-gait: a cada impacto o planejador escolhe o q1_ref
da passada seguinte, mantendo o estado pós-impacto dentro da RoA dada pelo
classificador e aproximando q1_ref da marcha alvo. A correção de torque de cada
passada vem da rede de passada treinada.
"""

import numpy as np

from ..autodiff import data_of
from ..bench.gait import GaitController, stride_phase
from ..dynamics.hybrid import HybridSystem, JumpEdge
from ..dynamics.walker import WalkerParams, guard_value, walker_guard, walker_jump, walker_mode
from ..exceptions import RoaPlanError
from ..planner import SwitchProblem, classifier_term, plan_or_fallback, planner_loss_classifier
from .hybrid import ModeArtifacts, Scenario, Switch

WALKER = "walker"


def walker_system(params=None, dt=1e-3, q_ref_range=(0.04, 0.18)):
    params = params or WalkerParams()
    jump = lambda x, u, p_i, p_j: walker_jump(x, params)
    return HybridSystem({WALKER: walker_mode(params, q_ref_range)},
                        [JumpEdge(WALKER, WALKER, walker_guard, jump)], dt=dt)


def walker_artifacts(library, stride_net=None, classifier=None, lyapunov=None):
    """Artefatos do walker: V e rede de passada treinadas no modo de passada, classificador como RoA"""
    return {WALKER: ModeArtifacts(lyapunov=lyapunov, controller=GaitController(library, stride_net),
                                  classifier=classifier)}


class WalkerScenario(Scenario):
    """
    targets é a sequência de marchas (q1_ref) a alcançar. O alvo avança quando a
    passada usa exatamente o q1_ref alvo e o estado pós-impacto está na bola de
    raio target_radius do ponto fixo; depois do último alvo a execução termina.
    """

    def __init__(self, system, artifacts, library, targets, params=None, x0=None, max_strides=40,
                 max_stride_time=3.0, target_radius=1e-2, dt=1e-3, **kwargs):
        super().__init__(system, artifacts, **kwargs)
        if self.method in ("lqr", "mpc") and WALKER not in self.controllers:
            raise RoaPlanError(f"method '{self.method}' needs an explicit walker controller")
        self.library = library
        self.targets = [float(q) for q in np.atleast_1d(targets)]
        if not self.targets:
            raise RoaPlanError("gait schedule is empty")
        self.params = params or WalkerParams()
        self.x0 = None if x0 is None else np.asarray(x0, dtype=float)
        self.max_strides = int(max_strides)
        self.max_stride_time = float(max_stride_time)
        self.target_radius = float(target_radius)
        self.dt = dt
        self.strides = 0
        self.target_index = 0

    @property
    def target(self):
        return self.targets[min(self.target_index, len(self.targets) - 1)]

    def meta(self):
        return dict(super().meta(), benchmark="walker", targets=list(self.targets), max_strides=self.max_strides,
                    target_radius=self.target_radius)

    def start(self):
        self.strides = 0
        self.target_index = 1 if len(self.targets) > 1 else 0
        q0 = self.targets[0]
        x0 = self.library.fixed_point(q0)[0] if self.x0 is None else self.x0.copy()
        return WALKER, x0, np.array([q0, self.correction(q0, x0)])

    def correction(self, q, x_post):
        """Δc0 da passada que começa em x_post"""
        art = self.artifacts.get(WALKER)
        controller = art.controller if art is not None and art.controller else GaitController(self.library)
        return float(controller.correction(q, x_post)[0])

    def value(self, mode, x, p):
        return None

    def impending(self, mode, x, x_next, p, clock):
        return bool(walker_guard(x[None, :], x_next[None, :])[0])

    def aux(self, mode, x, p, clock):
        return {"stride": self.strides, "q_ref": float(p[0]), "target": self.target,
                "phase": float(stride_phase(x[0], p[0]))}

    def failure(self, mode, x, p, clock, aux):
        if clock > self.max_stride_time:
            return "fall", f"no foot impact within {self.max_stride_time:g} s"
        if self.strides >= self.max_strides:
            return "failure", f"target gait not reached within {self.max_strides} strides"
        return None

    def problem(self, x_post, target):
        classifier = self.artifacts[WALKER].classifier
        lo, hi = self.library.q_range
        threshold, lam = self.planner.classifier_threshold, self.planner.heuristic_weight
        entering = lambda p: np.repeat(x_post[None, :], p.shape[0], axis=0)
        return SwitchProblem(
            configure=lambda z: z,
            loss=lambda p: planner_loss_classifier(entering, p, np.array([[target]]), classifier, threshold, lam),
            residual=lambda p: classifier_term(entering, p, classifier, threshold),
            lower=[lo], upper=[hi], nominal=[target], label=f"stride {self.strides}")

    def switch(self, t, mode, x_prev, x_next, p_k, clock, audit):
        before, after = guard_value(x_prev), guard_value(x_next)
        s = float(np.clip(before / (before - after), 0.0, 1.0))
        x_post = walker_jump((x_prev + s * (x_next - x_prev))[None, :], self.params)[0]
        self.strides += 1
        target = self.target
        result = None
        if self.planning and self.artifacts.get(WALKER, ModeArtifacts()).classifier is not None:
            result = plan_or_fallback(self.problem(x_post, target), self.planner, self.rng)
            q = float(np.asarray(result.p_i).reshape(-1)[0])
        else:
            q = target
        error = float(self.library.gait_error(target, x_post)[0])
        if abs(q - target) < 1e-9 and error <= self.target_radius:
            if self.target_index >= len(self.targets) - 1:
                return None
            self.target_index += 1
        p_i = np.array([q, self.correction(q, x_post)])
        row = self.audit_row(t, mode, mode, x_post, p_i, result)
        row.update(stride=self.strides, target=target, gait_error=error)
        art = self.artifacts.get(WALKER, ModeArtifacts())
        if art.lyapunov is not None:
            row["value"] = float(data_of(art.lyapunov.value(x_post[None, :], p_i[None, :1]))[0])
        classifier = art.classifier
        if classifier is not None:
            score = float(data_of(classifier.score(x_post[None, :], p_i[None, :1]))[0])
            row.update(score=score, inside=bool(classifier.decide(score) == 1))
        audit.append(row)
        return Switch(WALKER, x_post, p_i)
