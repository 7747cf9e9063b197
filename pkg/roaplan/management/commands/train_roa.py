"""
Ajusta o estimador de RoA (configuração → c*) de cada modo.
Uso: python manage.py train_roa --config car.yaml
"""

import numpy as np

from roaplan.bench.pipeline import build_system, fit_estimators, load_artifacts, write_roa_slices

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Treina o estimador de RoA sobre os conjuntos gerados por estimate_roa'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--slices',
            action='store_true',
            help='Grava a grade de pertinência {V ≤ c(p)} no plano (x0, x1) de cada modo'
        )

    def run(self, config, run_dir, options):
        layout = self.layout(config, run_dir)
        system = build_system(config, layout)
        estimators = fit_estimators(system, config, np.random.default_rng(config.seed), layout)
        for name in estimators:
            self.record(layout.roa_estimator(name), 'roa_estimator', name)
            self.stdout.write(self.style.SUCCESS(f'  ✓ {name}'))

        if options.get('slices'):
            for path in write_roa_slices(system, load_artifacts(system, layout), layout):
                self.record(path, 'dataset', path.name.split('.')[0])
        return {'modes': sorted(estimators)}
