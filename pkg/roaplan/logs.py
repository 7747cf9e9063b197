import logging
import time

import pandas as pd

logger = logging.getLogger(__name__)


class EpochLog:
    """Linhas por época dos logs de treino (CSV via pandas)"""

    def __init__(self, name):
        self.name = name
        self.rows = []
        self._started = time.perf_counter()

    def append(self, **fields):
        fields.setdefault("wall_time", time.perf_counter() - self._started)
        self.rows.append(fields)
        logger.info("%s %s", self.name, " ".join(f"{k}={_fmt(v)}" for k, v in fields.items()))

    def __len__(self):
        return len(self.rows)

    def to_frame(self):
        return pd.DataFrame(self.rows)

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False)
        return path


def _fmt(value):
    return f"{value:.4g}" if isinstance(value, float) else str(value)
