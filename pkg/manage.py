#!/usr/bin/env python
"""
Ponto de entrada do toolkit: os subcomandos (gen_maps, train_clf, estimate_roa,
train_roa, train_apex, find_gait, simulate, evaluate, ablate) e os comandos
usuais do Django.
"""
import os
import sys


def main():
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "core.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Django não está instalado no ambiente; instale requirements.txt"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
