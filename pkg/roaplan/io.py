"""
Leitura e escrita dos arquivos estruturados (YAML) e do manifesto de cada execução.
"""

import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import yaml

from .exceptions import MissingArtifactError

TRACKED_PACKAGES = ("Django", "python-dotenv", "numpy", "scipy", "pandas", "PyYAML")


def write_yaml(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(data, sort_keys=True, default_flow_style=False))
    return path


def read_yaml(path, what="file"):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, what)
    return yaml.safe_load(path.read_text()) or {}


def package_versions():
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def write_manifest(run_dir, command, config, started_at, finished_at=None, outputs=None, status="ok"):
    """manifest.yaml: comando, configuração resolvida, semente, versões e horários"""
    manifest = {
        "command": command,
        "profile": config.get("profile"),
        "seed": config.get("seed"),
        "config": config,
        "status": status,
        "python": platform.python_version(),
        "packages": package_versions(),
        "started_at": started_at.isoformat(),
        "finished_at": (finished_at or datetime.now(timezone.utc)).isoformat(),
        "outputs": sorted(str(p) for p in (outputs or [])),
    }
    return write_yaml(Path(run_dir) / "manifest.yaml", manifest)
