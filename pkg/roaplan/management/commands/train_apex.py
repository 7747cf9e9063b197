"""
Coleta transições ápice→ápice do pogobot na dinâmica completa e treina a rede de ápice.
Uso: python manage.py train_apex --config pogo.yaml
"""

import numpy as np
import pandas as pd

from roaplan.bench.pipeline import system_params
from roaplan.dynamics.pogo import PogoParams, collect_apex_data
from roaplan.exceptions import RoaPlanError
from roaplan.runtime.apex import INPUTS, OUTPUTS, train_apex_dynamics

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Treina a rede (h, ẋ, F, θ) → (h\', ẋ\', distância) usada pelo modo de ápice'

    def run(self, config, run_dir, options):
        layout = self.layout(config, run_dir)
        rng = np.random.default_rng(config.seed)
        params = system_params(PogoParams, config)
        inputs, outputs = collect_apex_data(config.apex.n_transitions, rng, params, config.apex.dt)
        if not len(inputs):
            raise RoaPlanError('no valid apex transition was collected')

        data = pd.DataFrame(np.concatenate([inputs, outputs], axis=1), columns=list(INPUTS) + list(OUTPUTS))
        data_path = run_dir / 'apex_transitions.csv'
        data.to_csv(data_path, index=False)
        self.record(data_path, 'dataset')

        fit = train_apex_dynamics(inputs, outputs, config.apex, rng)
        layout.root.mkdir(parents=True, exist_ok=True)
        self.record(fit.net.save(layout.apex_dynamics), 'apex_dynamics')
        for name, rmse in fit.report['holdout_rmse'].items():
            self.stdout.write(f'  RMSE {name}: {rmse:.4g}')
        return fit.report
