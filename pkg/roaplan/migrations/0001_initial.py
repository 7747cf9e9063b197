# Generated by Django 5.2.7

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="Run",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("command", models.CharField(max_length=40, verbose_name="Comando")),
                ("profile", models.CharField(default="desk", max_length=20, verbose_name="Perfil")),
                ("seed", models.IntegerField(default=0, verbose_name="Semente")),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("running", "Em execução"),
                            ("ok", "Concluída"),
                            ("failed", "Falhou"),
                        ],
                        default="running",
                        max_length=20,
                        verbose_name="Situação",
                    ),
                ),
                ("out_dir", models.CharField(max_length=500, verbose_name="Diretório de saída")),
                ("config", models.JSONField(blank=True, default=dict, verbose_name="Configuração")),
                ("summary", models.JSONField(blank=True, default=dict, verbose_name="Resumo")),
                ("error", models.TextField(blank=True, verbose_name="Erro")),
                ("started_at", models.DateTimeField(auto_now_add=True, verbose_name="Iniciada em")),
                ("finished_at", models.DateTimeField(blank=True, null=True, verbose_name="Terminada em")),
            ],
            options={
                "verbose_name": "Execução",
                "verbose_name_plural": "Execuções",
                "ordering": ["-started_at"],
            },
        ),
        migrations.CreateModel(
            name="Artifact",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "role",
                    models.CharField(
                        choices=[
                            ("lyapunov", "Função de Lyapunov"),
                            ("controller", "Controlador"),
                            ("roa_estimator", "Estimador de RoA"),
                            ("roa_classifier", "Classificador de RoA"),
                            ("apex_dynamics", "Dinâmica de ápice"),
                            ("dataset", "Conjunto de dados"),
                            ("maps", "Mapas"),
                            ("trajectory", "Trajetória"),
                            ("metrics", "Métricas"),
                            ("ablation", "Ablação"),
                            ("gait", "Marchas"),
                        ],
                        max_length=30,
                        verbose_name="Papel",
                    ),
                ),
                ("mode", models.CharField(blank=True, max_length=60, verbose_name="Modo")),
                ("path", models.CharField(max_length=500, verbose_name="Caminho")),
                ("created_at", models.DateTimeField(auto_now_add=True, verbose_name="Criado em")),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="artifacts",
                        to="roaplan.run",
                        verbose_name="Execução",
                    ),
                ),
            ],
            options={
                "verbose_name": "Artefato",
                "verbose_name_plural": "Artefatos",
                "ordering": ["run", "role", "path"],
            },
        ),
    ]
