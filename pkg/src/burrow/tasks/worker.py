"""
Celery app for running experiment cell groups on workers.

    uv run celery -A burrow.tasks.worker worker --loglevel=info
    uv run burrow experiment run tunnel --executor celery
"""

from typing import Any

import tzlocal
from celery import Celery

from burrow.config import Config

DEFAULT_REDIS_URL = "redis://localhost:6379/0"

WORKER_SETTINGS: dict[str, Any] = {
    # reports travel as pydantic JSON dumps
    "task_serializer": "json",
    "result_serializer": "json",
    "accept_content": ["json"],
    "enable_utc": True,
    "task_time_limit": 3600,
    "task_soft_time_limit": 3300,
    "broker_connection_timeout": 30,
    # one cell group at a time per worker process; a lost worker requeues it
    "task_acks_late": True,
    "task_reject_on_worker_lost": True,
    "task_ignore_result": False,
    "worker_prefetch_multiplier": 1,
    "worker_max_tasks_per_child": 50,
    "result_expires": 86400,
}


def create_celery_app(settings: Config | None = None) -> Celery:
    """
    Build the app from ``BURROW_BROKER_URL`` and ``BURROW_RESULT_BACKEND``,
    both falling back to a local Redis.
    """
    settings = settings or Config()
    app = Celery(
        "burrow",
        broker=str(settings.BROKER_URL or DEFAULT_REDIS_URL),
        backend=str(settings.RESULT_BACKEND or DEFAULT_REDIS_URL),
        include=["burrow.tasks.jobs"],
    )
    app.conf.update(WORKER_SETTINGS, timezone=tzlocal.get_localzone_name())
    return app


celery_app = create_celery_app()
