from collections.abc import Callable
from typing import Any, TypeVar, cast

from celery import shared_task
from celery.app.task import Task

from burrow.utils.exceptions import TaskNameRequiredError

T = TypeVar("T", bound=Callable[..., Any])

# a cell group simulates a whole preset, so limits are in tens of minutes
CELL_TASK_DEFAULTS: dict[str, Any] = {
    "bind": True,
    "retry_backoff": True,
    "retry_jitter": True,
    "max_retries": 3,
    "soft_time_limit": 1800,
    "time_limit": 2100,
}
RETRY_ON: tuple[type[BaseException], ...] = (ConnectionError, TimeoutError)


def burrow_task(*args: Any, **kwargs: Any) -> Callable[[T], Task]:
    """
    ``celery.shared_task`` with burrow's defaults (``CELL_TASK_DEFAULTS``),
    retrying on broker connection errors and timeouts.

    Keyword arguments override the defaults, except ``autoretry_for`` which
    is added to ``RETRY_ON``. Tasks are bound, so the function takes the task
    instance first:

        @burrow_task(name="burrow.export_map", max_retries=1)
        def export_map(self: Task, out_dir: str) -> str:
            ...

    Raises:
        TaskNameRequiredError: when neither ``name`` nor a positional name is
            given.
    """
    if not args and "name" not in kwargs:
        raise TaskNameRequiredError("burrow tasks need an explicit name")

    retry_on = set(RETRY_ON) | set(kwargs.pop("autoretry_for", ()))
    options = {**CELL_TASK_DEFAULTS, **kwargs, "autoretry_for": tuple(retry_on)}
    return cast(Callable[[T], Task], shared_task(*args, **options))
