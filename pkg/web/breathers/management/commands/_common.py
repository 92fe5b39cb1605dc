import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from breathers.exceptions import BreatherError, ConfigurationError
from breathers.serializers import load_config

logger = logging.getLogger(__name__)


def resolve_config_path(value):
    """A path as given, or a bare name looked up in BREATHER_CONFIG_DIR"""
    path = Path(value)
    if path.exists() or path.is_absolute():
        return path
    shipped = Path(settings.BREATHER_CONFIG_DIR) / path
    return shipped if shipped.exists() else path


class PipelineCommand(BaseCommand):
    """Loads --config and maps pipeline errors onto the exit-code contract"""

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True,
                            help='Path to the JSON run configuration, or a name under BREATHER_CONFIG_DIR')

    def run(self, config, options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            config = load_config(resolve_config_path(options['config']))
            return self.run(config, options)
        except serializers.ValidationError as e:
            logger.error(f"Invalid config {options['config']}: {e.detail}")
            raise CommandError(f"Invalid config: {e.detail}", returncode=ConfigurationError.exit_code)
        except BreatherError as e:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]} failed: {str(e)}", exc_info=True)
            raise CommandError(str(e), returncode=e.exit_code)
