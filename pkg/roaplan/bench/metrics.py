"""
Métricas por trajetória dos três benchmarks e a tabela agregada.
"""

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ..dynamics.hybrid import Trajectory
from ..exceptions import MissingArtifactError, RoaPlanError

BENCHMARKS = ("car", "pogo", "walker")
NAN = float("nan")


@dataclass
class MetricsRecord:
    benchmark: str
    map: str = ""
    method: str = ""
    lane_deviation: float = NAN
    mse: float = NAN
    distance_to_goal: float = NAN
    velocity_error: float = NAN
    collision: float = NAN
    rmse: float = NAN
    failure: float = NAN
    invalid: float = NAN
    step_runtime: float = NAN
    switches: int = 0

    def to_row(self):
        return asdict(self)


def _column(frame, name):
    if name not in frame.columns:
        return np.array([])
    return pd.to_numeric(frame[name], errors="coerce").dropna().to_numpy(dtype=float)


def _mean(values):
    return float(np.mean(values)) if len(values) else NAN


def _reached_goal(traj):
    return bool(traj.events_of("goal"))


def _remaining(traj, frame):
    """Fração do comprimento total que falta no ponto de parada"""
    total = float(traj.meta.get("total_length") or 0.0)
    if _reached_goal(traj) or total <= 0.0:
        return 0.0
    progress = _column(frame, "progress")
    done = progress[-1] if len(progress) else 0.0
    return float(np.clip((total - done) / total, 0.0, 1.0))


def car_metrics(traj, record):
    frame = traj.to_frame()
    record.lane_deviation = _mean(np.abs(_column(frame, "lateral")))
    record.mse = _mean(_column(frame, "sq_error"))
    record.distance_to_goal = _remaining(traj, frame)
    record.invalid = float(not traj.valid)
    return record


def pogo_metrics(traj, record):
    frame = traj.to_frame()
    record.velocity_error = _mean(_column(frame, "vel_error"))
    record.distance_to_goal = _remaining(traj, frame)
    record.collision = float(bool(traj.events_of("collision")))
    record.invalid = float(not traj.valid)
    return record


def walker_metrics(traj, record, audit=None):
    errors = _column(audit, "gait_error") if audit is not None else np.array([])
    record.rmse = float(np.sqrt(np.mean(errors ** 2))) if len(errors) else 0.0
    record.invalid = float(not traj.valid)
    record.failure = float(not _reached_goal(traj))
    return record


def compute_metrics(traj, kind=None, audit=None):
    """audit é a tabela do planejador (DataFrame), usada pelo walker"""
    kind = kind or traj.meta.get("benchmark")
    if kind not in BENCHMARKS:
        raise RoaPlanError(f"unknown benchmark '{kind}' (use {', '.join(BENCHMARKS)})")
    record = MetricsRecord(kind, str(traj.meta.get("map", "")), str(traj.meta.get("method", "")),
                           step_runtime=float(traj.meta.get("step_runtime", NAN)),
                           switches=int(traj.meta.get("switches", 0)))
    if kind == "car":
        return car_metrics(traj, record)
    if kind == "pogo":
        return pogo_metrics(traj, record)
    return walker_metrics(traj, record, audit)


def metrics_of_run(run, kind=None):
    return compute_metrics(run.trajectory, kind, run.audit.to_frame())


def load_trajectory(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, "trajectory")
    audit_path = path.with_suffix(".audit.csv")
    audit = pd.read_csv(audit_path) if audit_path.exists() and audit_path.stat().st_size else None
    return Trajectory.read_csv(path), audit


def metrics_from_files(paths, kind=None):
    records = []
    for path in paths:
        traj, audit = load_trajectory(path)
        records.append(compute_metrics(traj, kind, audit))
    return records


def metrics_frame(records):
    return pd.DataFrame([r.to_row() for r in records], columns=list(MetricsRecord.__dataclass_fields__))


def summarize(records):
    """Média por benchmark e método das colunas numéricas"""
    frame = metrics_frame(records)
    if frame.empty:
        return frame
    return frame.drop(columns=["map"]).groupby(["benchmark", "method"], as_index=False).mean(numeric_only=True)


def write_metrics(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics_frame(records).to_csv(path, index=False)
    return path
