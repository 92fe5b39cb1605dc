from django.apps import AppConfig


class BreathersConfig(AppConfig):
    name = 'breathers'
    verbose_name = 'Traveling breathers'
