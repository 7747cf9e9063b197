"""
Núcleo de sistemas híbridos: modos, arestas de salto, passo de Euler e rollouts.

Estados são lotes (B, n), configurações (B, k) e controles (B, m). As funções de
fluxo recebem e devolvem lotes e aceitam ndarray ou Tensor.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
import yaml

from ..autodiff.tensor import data_of, is_tensor
from ..exceptions import InvalidDynamicsError, RoaPlanError, ShapeError

logger = logging.getLogger(__name__)


def _vec(values):
    return np.atleast_1d(np.asarray(values, dtype=float))


def as_batch(x, dim=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or (dim is not None and x.shape[1] != dim):
        raise ShapeError(f"expected a batch of {dim}-vectors, got shape {x.shape}")
    return x


def euler_step(flow, x, u, p, dt):
    """x + f(x, u; p)·Δt"""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    dx = flow(x, u, p)
    if not is_tensor(dx) and not np.all(np.isfinite(dx)):
        raise InvalidDynamicsError("non-finite state derivative")
    return x + dx * dt


@dataclass(frozen=True)
class ModeSpec:
    """
    Um modo do sistema híbrido. Fornece `flow` (contínuo) ou `step_map` (mapa
    discreto de um passo). Caixas de amostragem são deslocamentos em torno de x*(p).
    """

    name: str
    state_dim: int
    control_dim: int
    config_dim: int
    equilibrium: Callable
    control_low: np.ndarray
    control_high: np.ndarray
    config_low: np.ndarray
    config_high: np.ndarray
    sample_low: np.ndarray
    sample_high: np.ndarray
    flow: Optional[Callable] = None
    step_map: Optional[Callable] = None
    nominal_control: Optional[Callable] = None
    features: Optional[Callable] = None
    feature_dim: Optional[int] = None
    valid: Optional[Callable] = None
    exit_guard: Optional[Callable] = None
    anchored: bool = True

    def __post_init__(self):
        if (self.flow is None) == (self.step_map is None):
            raise RoaPlanError(f"mode '{self.name}' needs exactly one of flow or step_map")
        for name in ("control_low", "control_high", "config_low", "config_high", "sample_low", "sample_high"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if np.any(self.control_low >= self.control_high):
            raise RoaPlanError(f"mode '{self.name}': empty control box")

    @property
    def discrete(self):
        return self.step_map is not None

    @property
    def n_features(self):
        return self.feature_dim if self.feature_dim is not None else self.config_dim

    def features_of(self, p):
        return self.features(p) if self.features is not None else p

    def nominal(self, p):
        if self.nominal_control is None:
            return np.zeros((len(p), self.control_dim))
        return self.nominal_control(p)

    def step(self, x, u, p, dt):
        if self.step_map is not None:
            return self.step_map(x, u, p)
        return euler_step(self.flow, x, u, p, dt)

    def sample_states(self, rng, p):
        p = as_batch(p, self.config_dim)
        offsets = rng.uniform(self.sample_low, self.sample_high, size=(len(p), self.state_dim))
        return self.equilibrium(p) + offsets

    def sample_configs(self, rng, n):
        return rng.uniform(self.config_low, self.config_high, size=(int(n), self.config_dim))


@dataclass(frozen=True)
class JumpEdge:
    """guard(x_prev, x, p, clock) -> máscara; jump(x, u, p_i, p_j) -> x'"""

    source: str
    target: str
    guard: Callable
    jump: Callable


@dataclass
class HybridSystem:
    modes: dict
    edges: list = field(default_factory=list)
    dt: float = 0.01
    guard_tol: float = 1e-6

    def mode(self, name):
        try:
            return self.modes[name]
        except KeyError:
            raise RoaPlanError(f"unknown mode '{name}'") from None

    def edges_from(self, name):
        return [e for e in self.edges if e.source == name]

    def edge(self, source, target):
        for e in self.edges:
            if e.source == source and e.target == target:
                return e
        raise RoaPlanError(f"no jump edge {source} -> {target}")


@dataclass
class Event:
    t: float
    kind: str
    from_mode: str
    to_mode: Optional[str] = None
    state: Optional[np.ndarray] = None


@dataclass
class Trajectory:
    dt: float
    times: list = field(default_factory=list)
    modes: list = field(default_factory=list)
    states: list = field(default_factory=list)
    controls: list = field(default_factory=list)
    values: list = field(default_factory=list)
    aux: list = field(default_factory=list)
    events: list = field(default_factory=list)
    exit_state: Optional[np.ndarray] = None
    valid: bool = True
    cause: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def record(self, t, mode, x, u=None, value=None, aux=None):
        if self.times and t <= self.times[-1]:
            raise RoaPlanError(f"sample time {t} does not advance past {self.times[-1]}")
        self.times.append(float(t))
        self.modes.append(mode)
        self.states.append(np.array(x, dtype=float).reshape(-1))
        self.controls.append(None if u is None else np.array(u, dtype=float).reshape(-1))
        self.values.append(None if value is None else float(value))
        self.aux.append(dict(aux or {}))

    def add_event(self, t, kind, from_mode, to_mode=None, state=None):
        self.events.append(Event(float(t), kind, from_mode, to_mode,
                                 None if state is None else np.array(state, dtype=float).reshape(-1)))

    def invalidate(self, t, mode, cause):
        self.valid = False
        self.cause = cause
        self.add_event(t, "invalid", mode)
        logger.debug("trajectory invalid at t=%.3f in %s: %s", t, mode, cause)

    def state_array(self):
        return np.array(self.states)

    def events_of(self, kind):
        return [e for e in self.events if e.kind == kind]

    def to_frame(self):
        rows = []
        for i, t in enumerate(self.times):
            row = {"t": t, "mode": self.modes[i]}
            row.update({f"x{j}": v for j, v in enumerate(self.states[i])})
            if self.controls[i] is not None:
                row.update({f"u{j}": v for j, v in enumerate(self.controls[i])})
            row["V"] = np.nan if self.values[i] is None else self.values[i]
            row.update(self.aux[i])
            rows.append(row)
        return pd.DataFrame(rows)

    def events_frame(self):
        return pd.DataFrame([{"t": e.t, "kind": e.kind, "from": e.from_mode, "to": e.to_mode} for e in self.events],
                            columns=["t", "kind", "from", "to"])

    def write_csv(self, path):
        """Amostras em path; eventos e metadados em arquivos irmãos"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        self.events_frame().to_csv(path.with_suffix(".events.csv"), index=False)
        meta = dict(self.meta, dt=self.dt, valid=self.valid, cause=self.cause)
        if self.exit_state is not None:
            meta["exit_state"] = self.exit_state.tolist()
        path.with_suffix(".meta.yaml").write_text(yaml.safe_dump(meta, sort_keys=True))
        return path

    @classmethod
    def read_csv(cls, path):
        path = Path(path)
        frame = pd.read_csv(path)
        meta_path = path.with_suffix(".meta.yaml")
        meta = yaml.safe_load(meta_path.read_text()) if meta_path.exists() else {}
        traj = cls(dt=float(meta.pop("dt", 0.0)), valid=bool(meta.pop("valid", True)),
                   cause=meta.pop("cause", "") or "")
        exit_state = meta.pop("exit_state", None)
        traj.exit_state = None if exit_state is None else np.asarray(exit_state, dtype=float)
        traj.meta = meta
        x_cols = [c for c in frame.columns if c.startswith("x") and c[1:].isdigit()]
        u_cols = [c for c in frame.columns if c.startswith("u") and c[1:].isdigit()]
        aux_cols = [c for c in frame.columns if c not in {"t", "mode", "V", *x_cols, *u_cols}]
        for _, row in frame.iterrows():
            u = row[u_cols].to_numpy(dtype=float) if u_cols else None
            if u is not None and np.all(np.isnan(u)):
                u = None
            value = None if pd.isna(row["V"]) else float(row["V"])
            traj.record(row["t"], row["mode"], row[x_cols].to_numpy(dtype=float), u, value,
                        {c: row[c] for c in aux_cols})
        events_path = path.with_suffix(".events.csv")
        if events_path.exists():
            for _, row in pd.read_csv(events_path).iterrows():
                to_mode = None if pd.isna(row["to"]) else row["to"]
                traj.add_event(row["t"], row["kind"], row["from"], to_mode)
        return traj


def _controls(mode, controller, x, p):
    if controller is None:
        return mode.nominal(p)
    return np.asarray(data_of(controller(x, p)), dtype=float)


def localize_crossing(guard, x_prev, x_next, p, clock_prev, dt, iterations=40):
    """
    Fração s ∈ (0, 1] do passo de Euler em que a guarda dispara, por bisseção ao
    longo do segmento x_prev → x_next (o relógio avança junto). Devolve (s, estado).
    """
    x_prev, x_next = as_batch(x_prev), as_batch(x_next)
    lo, hi = np.zeros(len(x_prev)), np.ones(len(x_prev))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        fired = np.asarray(guard(x_prev, x_prev + mid[:, None] * (x_next - x_prev), p, clock_prev + mid * dt),
                           dtype=bool).reshape(-1)
        hi = np.where(fired, mid, hi)
        lo = np.where(fired, lo, mid)
    return hi, x_prev + hi[:, None] * (x_next - x_prev)


def rollout(system, mode_name, controller, x0, p, horizon, dt=None, certificate=None, clock0=0.0):
    """
    Rollout de um único estado no modo indicado. Para no horizonte, no primeiro
    cruzamento de guarda (registrando exit_state no ponto interpolado) ou em
    dinâmica inválida.
    """
    mode = system.mode(mode_name)
    dt = dt if dt is not None else system.dt
    x = as_batch(x0, mode.state_dim)
    p = as_batch(p, mode.config_dim)
    if mode.valid is not None and not bool(np.asarray(mode.valid(x, p)).reshape(-1)[0]):
        raise RoaPlanError(f"initial state {x[0].tolist()} is outside the valid set of mode '{mode.name}'")
    guards = [(e.target, e.guard) for e in system.edges_from(mode.name)]
    if mode.exit_guard is not None:
        guards.append((None, mode.exit_guard))
    traj = Trajectory(dt)
    t, clock = 0.0, clock0

    def value_of(state):
        return None if certificate is None else float(np.asarray(certificate.value(state, p)).reshape(-1)[0])

    for _ in range(int(horizon)):
        u = _controls(mode, controller, x, p)
        traj.record(t, mode.name, x[0], u[0], value_of(x))
        try:
            x_next = mode.step(x, u, p, dt)
        except InvalidDynamicsError as exc:
            traj.invalidate(t, mode.name, str(exc))
            return traj
        if not np.all(np.isfinite(x_next)) or (mode.valid is not None and not bool(mode.valid(x_next, p)[0])):
            traj.invalidate(t + dt, mode.name, "state left the valid set")
            return traj
        t += dt
        clock += dt
        for target, guard in guards:
            if bool(np.asarray(guard(x, x_next, p, clock)).reshape(-1)[0]):
                s, cross = localize_crossing(guard, x, x_next, p, clock - dt, dt)
                t_cross = t - dt + float(s[0]) * dt
                traj.record(t_cross, mode.name, cross[0], None, value_of(cross))
                traj.exit_state = cross[0].copy()
                traj.add_event(t_cross, "exit", mode.name, target, cross[0])
                return traj
        x = x_next
    traj.record(t, mode.name, x[0], None, value_of(x))
    return traj


@dataclass
class BatchRollout:
    states: np.ndarray  # (T+1, B, n)
    controls: np.ndarray  # (T, B, m), NaN depois de congelado
    valid: np.ndarray
    exit_index: np.ndarray  # passo do cruzamento de guarda, -1 se não houve
    exit_fraction: Optional[np.ndarray] = None  # fração do último passo até a guarda

    def exit_times(self, dt):
        return np.where(self.exited, (self.exit_index - 1 + np.nan_to_num(self.exit_fraction, nan=1.0)) * dt,
                        np.nan)

    @property
    def final(self):
        return self.states[-1]

    @property
    def exited(self):
        return self.exit_index >= 0

    def visited(self):
        """Pares (estado, índice da amostra) efetivamente visitados"""
        steps = self.states.shape[0]
        alive = np.ones((steps, self.states.shape[1]), dtype=bool)
        alive[1:] = ~np.isnan(self.controls).any(axis=2)
        alive[1:] &= alive[:-1]
        index = np.broadcast_to(np.arange(self.states.shape[1]), alive.shape)
        return self.states[alive], index[alive]


def _batch_step(mode, x, u, p, dt):
    with np.errstate(all="ignore"):
        try:
            return mode.step(x, u, p, dt) if mode.discrete else x + mode.flow(x, u, p) * dt
        except InvalidDynamicsError:
            pass
        out = np.full_like(x, np.nan)
        for i in range(len(x)):
            try:
                out[i] = mode.step(x[i:i + 1], u[i:i + 1], p[i:i + 1], dt)[0]
            except InvalidDynamicsError:
                continue
        return out


def simulate_batch(mode, controller, x0, p, steps, dt, clock0=0.0):
    """
    Rollouts vetorizados. Amostras inválidas (derivada não finita, fora do conjunto
    válido) são congeladas e marcadas; amostras que cruzam a guarda do modo param
    no estado de saída.
    """
    x = as_batch(x0, mode.state_dim).copy()
    p = as_batch(p, mode.config_dim)
    batch = len(x)
    if len(p) != batch:
        raise ShapeError(f"{batch} states but {len(p)} configurations")
    active = np.ones(batch, dtype=bool)
    valid = np.ones(batch, dtype=bool)
    exit_index = np.full(batch, -1)
    exit_fraction = np.full(batch, np.nan)
    states = np.empty((int(steps) + 1, batch, mode.state_dim))
    controls = np.full((int(steps), batch, mode.control_dim), np.nan)
    states[0] = x
    clock = clock0
    for k in range(int(steps)):
        idx = np.flatnonzero(active)
        if idx.size:
            xa, pa = x[idx], p[idx]
            ua = _controls(mode, controller, xa, pa)
            xn = _batch_step(mode, xa, ua, pa, dt)
            bad = ~np.isfinite(xn).all(axis=1)
            if mode.valid is not None:
                bad |= ~np.asarray(mode.valid(np.where(bad[:, None], xa, xn), pa), dtype=bool)
            controls[k, idx] = ua
            good = idx[~bad]
            x[good] = xn[~bad]
            valid[idx[bad]] = False
            active[idx[bad]] = False
            if mode.exit_guard is not None and good.size:
                hit = np.asarray(mode.exit_guard(xa[~bad], xn[~bad], pa[~bad], clock + dt), dtype=bool)
                if hit.any():
                    s, cross = localize_crossing(mode.exit_guard, xa[~bad][hit], xn[~bad][hit], pa[~bad][hit],
                                                 clock, dt)
                    x[good[hit]] = cross
                    exit_fraction[good[hit]] = s
                exit_index[good[hit]] = k + 1
                active[good[hit]] = False
        clock += dt
        states[k + 1] = x
    return BatchRollout(states, controls, valid, exit_index, exit_fraction)


def newton_nominal_control(flow, x_star, p, u0, h=1e-6):
    """Um passo de Gauss-Newton em f(x*, u; p) = 0 sobre u (lote)"""
    u0 = as_batch(u0)
    r = flow(x_star, u0, p)
    m = u0.shape[1]
    jac = np.empty(r.shape + (m,))
    for k in range(m):
        du = np.zeros_like(u0)
        du[:, k] = h
        jac[..., k] = (flow(x_star, u0 + du, p) - flow(x_star, u0 - du, p)) / (2 * h)
    return u0 - np.einsum("bmn,bn->bm", np.linalg.pinv(jac), r)
