from django.http import JsonResponse
from django.views.decorators.http import require_http_methods

from .models import Run


def _run_data(run):
    return {
        'id': run.id,
        'command': run.command,
        'profile': run.profile,
        'seed': run.seed,
        'status': run.status,
        'out_dir': run.out_dir,
        'started_at': run.started_at.isoformat(),
        'finished_at': run.finished_at.isoformat() if run.finished_at else None,
    }


@require_http_methods(["GET"])
def run_list(request):
    """Execuções registradas, mais recentes primeiro; ?command= filtra pelo comando"""
    try:
        runs = Run.objects.all()
        command = request.GET.get('command')
        if command:
            runs = runs.filter(command=command)
        return JsonResponse({'success': True, 'runs': [_run_data(run) for run in runs]})
    except Exception as e:
        return JsonResponse({'success': False, 'error': str(e)}, status=500)


@require_http_methods(["GET"])
def run_detail(request, run_id):
    """Uma execução com seus artefatos e o resumo de métricas"""
    try:
        run = Run.objects.get(id=run_id)
        data = _run_data(run)
        data.update({
            'success': True,
            'config': run.config,
            'summary': run.summary,
            'error': run.error or None,
            'artifacts': [
                {'role': a.role, 'mode': a.mode or None, 'path': a.path}
                for a in run.artifacts.all()
            ],
        })
        return JsonResponse(data)
    except Run.DoesNotExist:
        return JsonResponse({'success': False, 'error': 'Execução não encontrada'}, status=404)
    except Exception as e:
        return JsonResponse({'success': False, 'error': str(e)}, status=500)
