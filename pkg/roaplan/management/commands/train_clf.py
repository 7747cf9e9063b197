"""
Treina a CLF neural e o controlador de cada modo certificado (no walker, sobre o mapa
de passada da biblioteca de find_gait, seguido do classificador de RoA).
Uso: python manage.py train_clf --config car.yaml --profile desk
"""

import numpy as np

from roaplan.bench.pipeline import build_system, train_certificates
from roaplan.runtime.walker import WALKER

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Treina certificado (V, π) por modo e grava checkpoints, logs de época e cotas de norma'

    def run(self, config, run_dir, options):
        layout = self.layout(config, run_dir)
        system = build_system(config, layout)
        results = train_certificates(system, config, np.random.default_rng(config.seed), layout)

        summary = {}
        for name, result in results.items():
            for suffix in ('lyapunov_p', 'lyapunov_v'):
                self.record(layout.certificates / f'{name}.{suffix}.json', 'lyapunov', name)
            self.record(layout.certificates / f'{name}.controller.json', 'controller', name)
            self.record(layout.training_log(name), 'dataset', name)
            if layout.bounds(name).exists():
                self.record(layout.bounds(name), 'lyapunov', name)
            if name == WALKER:
                self.record(layout.walker_classifier, 'roa_classifier', name)
            frame = result.log.to_frame()
            epochs = len(frame)
            summary[name] = {'epochs': epochs}
            if epochs and 'val_loss' in frame.columns:
                summary[name]['best_val_loss'] = float(frame['val_loss'].min())
            self.stdout.write(self.style.SUCCESS(f'  ✓ {name}: {epochs} épocas'))
        return summary
