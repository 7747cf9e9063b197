"""
Executa um ambiente (bench.map_index) com o método escolhido e grava a trajetória.
Uso: python manage.py simulate --config car.yaml --method planned
"""

import numpy as np

from roaplan.bench.metrics import metrics_of_run
from roaplan.bench.pipeline import build_system, load_artifacts, load_environments, run_environment
from roaplan.exceptions import ConfigError
from roaplan.runtime.hybrid import METHODS

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Simula o sistema híbrido num ambiente usando os artefatos treinados'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--method',
            choices=METHODS,
            help='Controlador de alto nível (padrão: execution.method)'
        )

    def run(self, config, run_dir, options):
        layout = self.layout(config, run_dir)
        system = build_system(config, layout)
        artifacts = load_artifacts(system, layout)
        environments = load_environments(config)
        index = config.bench.map_index
        if not 0 <= index < len(environments):
            raise ConfigError('bench.map_index', f'{index} is outside the {len(environments)} environments')
        environment = environments[index]
        method = options.get('method') or config.execution.method

        run = run_environment(config, system, artifacts, environment, method,
                              np.random.default_rng(config.seed), layout)
        path = self.record(run.write(run_dir / 'trajectory.csv'), 'trajectory')
        record = metrics_of_run(run, config.system.kind)
        record.map, record.method = environment.name, method

        if run.trajectory.valid:
            self.stdout.write(self.style.SUCCESS(f'  ✓ {environment.name}: {len(run.trajectory)} passos em {path}'))
        else:
            self.stdout.write(self.style.WARNING(f'  {environment.name}: trajetória inválida ({path})'))
        return record.to_row()
