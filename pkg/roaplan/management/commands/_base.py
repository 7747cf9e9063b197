"""
Base comum dos comandos do toolkit: flags globais, configuração resolvida,
diretório da execução, manifesto e registro Run/Artifact no banco.
"""

import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from roaplan.bench.pipeline import ArtifactLayout
from roaplan.conf import PROFILES, load_config
from roaplan.exceptions import RoaPlanError
from roaplan.io import write_manifest
from roaplan.models import Artifact, Run


def clean(value):
    """Valores prontos para JSONField: NaN/inf viram None, tipos numpy viram nativos"""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class RoaPlanCommand(BaseCommand):
    """
    Subclasses implementam add_command_arguments (opcional) e run(config,
    run_dir, options), que devolve um dicionário de resumo. Arquivos gerados
    são registrados com self.record(path, role, mode).
    """

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, help='Arquivo YAML de configuração')
        parser.add_argument('--seed', type=int, help='Semente da execução')
        parser.add_argument('--profile', choices=sorted(PROFILES), help='Perfil de escala (desk ou paper)')
        parser.add_argument('--out', type=str, help='Diretório base das execuções')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def record(self, path, role, mode=''):
        self.outputs.append((Path(path), role, mode))
        return path

    def layout(self, config, run_dir):
        """Artefatos treinados: artifacts.dir quando definido, senão o próprio diretório da execução"""
        return ArtifactLayout(config.artifacts.dir or run_dir)

    def handle(self, *args, **options):
        defaults = getattr(settings, 'ROAPLAN', {})
        try:
            config = load_config(options.get('config'), options.get('profile'), options.get('seed'),
                                 options.get('out'), default_profile=defaults.get('PROFILE', 'desk'),
                                 default_seed=defaults.get('SEED', 0))
        except RoaPlanError as e:
            raise CommandError(f'Configuração inválida: {e}') from e

        base = Path(config.out or defaults.get('RUNS_DIR', 'runs'))
        run_dir = base / f'{self.command_name}-{config.seed}'
        run_dir.mkdir(parents=True, exist_ok=True)
        started_at = datetime.now(timezone.utc)
        run = Run.objects.create(command=self.command_name, profile=config.profile, seed=config.seed,
                                 out_dir=str(run_dir), config=clean(config.to_dict()))
        self.outputs = []
        self.stdout.write(f'{self.command_name}: perfil {config.profile}, seed {config.seed} → {run_dir}')

        try:
            summary = self.run(config, run_dir, options) or {}
        except RoaPlanError as e:
            self._finish(run, config, run_dir, started_at, 'failed', error=str(e))
            self.stdout.write(self.style.ERROR(f'✗ {e}'))
            raise CommandError(str(e)) from e

        self._finish(run, config, run_dir, started_at, 'ok', summary=summary)
        self.stdout.write(self.style.SUCCESS(f'✓ {self.command_name} concluído ({len(self.outputs)} arquivos)'))
        return None

    def _finish(self, run, config, run_dir, started_at, status, summary=None, error=''):
        finished_at = datetime.now(timezone.utc)
        outputs = [path for path, _, _ in self.outputs]
        manifest = write_manifest(run_dir, self.command_name, clean(config.to_dict()), started_at, finished_at,
                                  outputs, status)
        run.status = status
        run.summary = clean(summary or {})
        run.error = error
        run.finished_at = finished_at
        run.save()
        Artifact.objects.bulk_create([
            Artifact(run=run, role=role, mode=mode, path=str(path)) for path, role, mode in self.outputs
        ])
        return manifest

    def run(self, config, run_dir, options):
        raise NotImplementedError
