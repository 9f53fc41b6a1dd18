from django.apps import AppConfig


class DfpConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'dfp'
    verbose_name = 'Direct future prediction'
