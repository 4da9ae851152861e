import pytest
from celery import Celery

from burrow import celery_app


@pytest.fixture(autouse=True)
def test_app() -> Celery:
    """Configure Celery for synchronous test execution."""
    celery_app.conf.update(
        task_always_eager=True,
        task_eager_propagates=True,
    )
    return celery_app
