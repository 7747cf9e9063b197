from django.db import models


class Run(models.Model):
    STATUS_CHOICES = [
        ("running", "Em execução"),
        ("ok", "Concluída"),
        ("failed", "Falhou"),
    ]

    command = models.CharField(max_length=40, verbose_name="Comando")
    profile = models.CharField(max_length=20, default="desk", verbose_name="Perfil")
    seed = models.IntegerField(default=0, verbose_name="Semente")
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default="running", verbose_name="Situação")
    out_dir = models.CharField(max_length=500, verbose_name="Diretório de saída")
    config = models.JSONField(default=dict, blank=True, verbose_name="Configuração")
    summary = models.JSONField(default=dict, blank=True, verbose_name="Resumo")
    error = models.TextField(blank=True, verbose_name="Erro")
    started_at = models.DateTimeField(auto_now_add=True, verbose_name="Iniciada em")
    finished_at = models.DateTimeField(null=True, blank=True, verbose_name="Terminada em")

    class Meta:
        ordering = ["-started_at"]
        verbose_name = "Execução"
        verbose_name_plural = "Execuções"

    def __str__(self):
        return f"{self.command} (seed {self.seed}) - {self.get_status_display()}"


class Artifact(models.Model):
    ROLE_CHOICES = [
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
    ]

    run = models.ForeignKey(Run, on_delete=models.CASCADE, related_name="artifacts", verbose_name="Execução")
    role = models.CharField(max_length=30, choices=ROLE_CHOICES, verbose_name="Papel")
    mode = models.CharField(max_length=60, blank=True, verbose_name="Modo")
    path = models.CharField(max_length=500, verbose_name="Caminho")
    created_at = models.DateTimeField(auto_now_add=True, verbose_name="Criado em")

    class Meta:
        ordering = ["run", "role", "path"]
        verbose_name = "Artefato"
        verbose_name_plural = "Artefatos"

    def __str__(self):
        return f"{self.get_role_display()}: {self.path}"
