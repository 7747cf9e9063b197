"""
Sensibilidade do benchmark do carro a η, κ e ao passo de integração.
"""

import copy
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from ..exceptions import ConfigError
from .metrics import summarize
from .pipeline import evaluate

logger = logging.getLogger(__name__)

ABLATIONS = {
    "eta": ("planner", "eta", "etas"),
    "kappa": ("planner", "kappa", "kappas"),
    "dt": ("execution", "dt", "dts"),
}


def ablated_config(config, kind, value):
    section, key, _ = ABLATIONS[kind]
    variant = copy.deepcopy(config)
    setattr(getattr(variant, section), key, float(value))
    return variant


def run_ablation(kind, config, system, artifacts, environments, out_dir, grid=None):
    """Uma linha por ponto da grade: desvio de faixa, RMSE e distância ao objetivo médios"""
    if kind not in ABLATIONS:
        raise ConfigError("ablation.kind", f"unknown ablation '{kind}' (use {', '.join(ABLATIONS)})")
    if config.system.kind != "car":
        raise ConfigError("system.kind", "ablations run on the car benchmark")
    grid = tuple(grid) if grid is not None else getattr(config.ablation, ABLATIONS[kind][2])
    rows = []
    for value in grid:
        variant = ablated_config(config, kind, value)
        records, _ = evaluate(variant, system, artifacts, environments, ("planned",),
                              Path(out_dir) / f"{kind}={value:g}")
        summary = summarize(records)
        row = {kind: float(value)}
        if not summary.empty:
            first = summary.iloc[0]
            row.update(lane_deviation=float(first["lane_deviation"]), rmse=float(np.sqrt(first["mse"])),
                       distance_to_goal=float(first["distance_to_goal"]), invalid=float(first["invalid"]))
        rows.append(row)
        logger.info("ablation %s=%g: %s", kind, value, row)
    return pd.DataFrame(rows)
