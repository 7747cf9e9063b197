"""
Avalia métodos em todos os ambientes e grava metrics.csv e summary.csv.
Uso: python manage.py evaluate --config car.yaml --method planned lqr mpc
     python manage.py evaluate --config car.yaml --trajectories runs/simulate-0/trajectory.csv
"""

from roaplan.bench.metrics import metrics_from_files, summarize, write_metrics
from roaplan.bench.pipeline import build_system, evaluate, load_artifacts, load_environments
from roaplan.runtime.hybrid import METHODS

from ._base import RoaPlanCommand


class Command(RoaPlanCommand):
    help = 'Executa cada método em cada ambiente e agrega as métricas do benchmark'

    def add_command_arguments(self, parser):
        parser.add_argument(
            '--method',
            nargs='+',
            choices=METHODS,
            help='Métodos avaliados (padrão: execution.method)'
        )
        parser.add_argument(
            '--trajectories',
            nargs='+',
            help='Só calcula as métricas de trajetórias já gravadas'
        )

    def run(self, config, run_dir, options):
        if options.get('trajectories'):
            records = metrics_from_files(options['trajectories'], config.system.kind)
        else:
            layout = self.layout(config, run_dir)
            system = build_system(config, layout)
            artifacts = load_artifacts(system, layout)
            methods = options.get('method') or [config.execution.method]
            records, paths = evaluate(config, system, artifacts, load_environments(config), methods, run_dir,
                                      layout)
            for path in paths:
                self.record(path, 'trajectory')

        self.record(write_metrics(run_dir / 'metrics.csv', records), 'metrics')
        summary = summarize(records)
        summary_path = run_dir / 'summary.csv'
        summary.to_csv(summary_path, index=False)
        self.record(summary_path, 'metrics')
        self.stdout.write(summary.to_string(index=False) if not summary.empty else '  nenhuma execução')
        return {'runs': len(records), 'summary': summary.to_dict(orient='records')}
