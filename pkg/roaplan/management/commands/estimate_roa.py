"""
Mede o índice do maior nível ε-estável c*(p) em configurações amostradas de cada modo.
Uso: python manage.py estimate_roa --config car.yaml
"""

import numpy as np

from roaplan.bench.pipeline import build_system, estimate_levels, lqr_comparison

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Gera o conjunto (configuração, c*) de cada modo a partir dos certificados treinados'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--compare-lqr',
            action='store_true',
            help='Compara nível e volume da RoA aprendida com a do certificado LQR'
        )

    def run(self, config, run_dir, options):
        layout = self.layout(config, run_dir)
        system = build_system(config, layout)
        rng = np.random.default_rng(config.seed)
        datasets = estimate_levels(system, config, rng, layout)

        summary = {}
        for name, dataset in datasets.items():
            self.record(layout.roa_dataset(name), 'dataset', name)
            levels = dataset.to_frame()['c_star']
            summary[name] = {'configs': len(levels), 'mean_c_star': float(levels.mean()),
                             'min_c_star': float(levels.min())}
            self.stdout.write(f'  {name}: c* médio {levels.mean():.4g} em {len(levels)} configurações')

        if options.get('compare_lqr'):
            frame = lqr_comparison(system, config, rng, layout)
            path = run_dir / 'lqr_comparison.csv'
            frame.to_csv(path, index=False)
            self.record(path, 'dataset')
            summary['lqr_comparison'] = frame.to_dict(orient='records')
        return summary
