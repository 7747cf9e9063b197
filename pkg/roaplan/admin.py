from django.contrib import admin
from .models import Artifact, Run


class ArtifactInline(admin.TabularInline):
    model = Artifact
    extra = 0
    readonly_fields = ['role', 'mode', 'path', 'created_at']


@admin.register(Run)
class RunAdmin(admin.ModelAdmin):
    list_display = ['command', 'profile', 'seed', 'status', 'started_at', 'finished_at']
    list_filter = ['command', 'profile', 'status']
    search_fields = ['command', 'out_dir', 'error']
    readonly_fields = ['started_at', 'finished_at']
    inlines = [ArtifactInline]
    list_per_page = 20


@admin.register(Artifact)
class ArtifactAdmin(admin.ModelAdmin):
    list_display = ['role', 'mode', 'path', 'run', 'created_at']
    list_filter = ['role']
    search_fields = ['path', 'mode', 'run__command']
    list_per_page = 20
