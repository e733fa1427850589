"""
WSGI entry point for serving the p2pSched_Back API (e.g. `gunicorn p2pSched_Back.wsgi`).
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'p2pSched_Back.settings')

application = get_wsgi_application()
