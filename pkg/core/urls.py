"""
URL configuration for the roaplan project.

/admin/ traz o admin do Django; /roaplan/ expõe as execuções registradas em JSON.
"""

from django.contrib import admin
from django.urls import path, include
from django.views.generic import RedirectView

urlpatterns = [
    path("admin/", admin.site.urls),
    path("roaplan/", include("roaplan.urls")),
    path("", RedirectView.as_view(url='/roaplan/runs/', permanent=False)),
]
