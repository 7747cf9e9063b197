from django.apps import AppConfig


class RoaplanConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "roaplan"
    verbose_name = "RoA-Plan"
