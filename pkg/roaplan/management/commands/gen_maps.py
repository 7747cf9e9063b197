"""
Gera os ambientes de avaliação (mapas do carro, labirintos do pogobot ou
sequências de marchas do walker) e grava em maps.yaml.
Uso: python manage.py gen_maps --config car.yaml --seed 7
"""

from roaplan.bench.environments import adversarial_car_map, write_maps
from roaplan.bench.pipeline import generate_environments

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Gera os mapas de avaliação de forma determinística a partir da semente'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--adversarial',
            action='store_true',
            help='Acrescenta o mapa adversarial (reta seca seguida de curva no gelo); só para o carro'
        )

    def run(self, config, run_dir, options):
        kind = config.system.kind
        environments = generate_environments(config, seed=config.seed)
        if options.get('adversarial') and kind == 'car':
            environments.append(adversarial_car_map())
        path = self.record(write_maps(run_dir / 'maps.yaml', environments, kind, config.seed), 'maps')
        self.stdout.write(f'  {len(environments)} ambientes ({kind}) em {path}')
        return {'kind': kind, 'maps': [env.name for env in environments]}
