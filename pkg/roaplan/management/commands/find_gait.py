"""
Calcula a biblioteca de marchas periódicas do walker (pontos fixos e linearização da passada).
Uso: python manage.py find_gait --config walker.yaml
"""

from roaplan.bench.gait import build_gait_library
from roaplan.bench.pipeline import system_params
from roaplan.dynamics.walker import WalkerParams

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Busca os pontos fixos de passada na grade de q1_ref; train_clf usa a biblioteca depois'

    def run(self, config, run_dir, options):
        layout = self.layout(config, run_dir)
        params = system_params(WalkerParams, config)
        library = build_gait_library(config.gait, params)
        layout.root.mkdir(parents=True, exist_ok=True)
        self.record(library.save(layout.gaits), 'gait')
        for gait in library.gaits:
            self.stdout.write(f'  q_ref={gait.q_ref:.3f} resíduo {gait.residual:.2e} período {gait.duration:.3f} s')
        return {'gaits': len(library.gaits), 'q_range': list(library.q_range)}
