"""
URL configuration for chemotaxis_project project.

Only the admin is routed: it browses the run ledger written by the
management commands.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
