"""
Exit-code mapping shared by the management commands:
2 for bad configuration or input, 1 for invariant violations and output failures.
"""

from contextlib import contextmanager

from django.core.management.base import CommandError
from rest_framework.exceptions import ValidationError

from core.exceptions import InvariantViolation

CONFIG_ERROR = 2
INTERNAL_ERROR = 1


@contextmanager
def config_errors():
    try:
        yield
    except ValidationError as exc:
        raise CommandError(f'invalid scenario: {exc.detail}', returncode=CONFIG_ERROR) from exc
    except ValueError as exc:
        raise CommandError(str(exc), returncode=CONFIG_ERROR) from exc


@contextmanager
def run_errors():
    try:
        yield
    except InvariantViolation as exc:
        raise CommandError(f'invariant violated: {exc}', returncode=INTERNAL_ERROR) from exc
    except OSError as exc:
        raise CommandError(str(exc), returncode=INTERNAL_ERROR) from exc


def split_list(text, cast, name):
    """
    Parse a comma-separated option value.
    """
    try:
        items = [cast(item.strip()) for item in text.split(',') if item.strip()]
    except ValueError as exc:
        raise CommandError(f'--{name}: {exc}', returncode=CONFIG_ERROR) from exc
    if not items:
        raise CommandError(f'--{name} needs at least one value', returncode=CONFIG_ERROR)
    return items
