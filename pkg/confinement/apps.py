from django.apps import AppConfig


class ConfinementConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'confinement'
    verbose_name = 'Chemotactic confinement toolkit'
