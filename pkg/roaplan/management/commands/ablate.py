"""
Sensibilidade do benchmark do carro a η, κ ou Δt.
Uso: python manage.py ablate --config car.yaml --kind eta --grid 0.5 0.8 0.9 1.0 1.2
"""

from roaplan.bench.ablation import ABLATIONS, run_ablation
from roaplan.bench.pipeline import build_system, load_artifacts, load_environments

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Reexecuta o benchmark do carro em cada ponto da grade e grava a tabela de ablação'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--kind',
            choices=sorted(ABLATIONS),
            required=True,
            help='Hiperparâmetro variado'
        )
        parser.add_argument(
            '--grid',
            nargs='+',
            type=float,
            help='Valores da grade (padrão: seção ablation da configuração)'
        )

    def run(self, config, run_dir, options):
        kind = options['kind']
        layout = self.layout(config, run_dir)
        system = build_system(config, layout)
        artifacts = load_artifacts(system, layout)
        table = run_ablation(kind, config, system, artifacts, load_environments(config), run_dir,
                             options.get('grid'))
        path = run_dir / f'ablation-{kind}.csv'
        table.to_csv(path, index=False)
        self.record(path, 'ablation')
        self.stdout.write(table.to_string(index=False))
        return {'kind': kind, 'rows': table.to_dict(orient='records')}
