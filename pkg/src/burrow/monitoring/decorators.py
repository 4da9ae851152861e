import asyncio
import functools
import inspect
import logging
import time
import warnings
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from typing import Any, ParamSpec, TypeVar, cast

from burrow.monitoring.loggers import Logger
from burrow.monitoring.metrics import OPERATION_COUNT, OPERATION_LATENCY
from burrow.monitoring.validation import validate_metric_name

P = ParamSpec("P")
R = TypeVar("R")


@contextmanager
def _measured(name: str, log: logging.Logger, log_calls: bool) -> Iterator[None]:
    """Count the call by outcome and observe its latency."""
    if log_calls:
        log.info("%s started", name)
    start = time.perf_counter()
    status = "success"
    try:
        yield
    except asyncio.CancelledError:
        status = "cancelled"
        log.info("%s cancelled", name)
        raise
    except Exception:
        status = "error"
        log.exception("%s failed", name)
        raise
    else:
        if log_calls:
            log.info("%s finished in %.3fs", name, time.perf_counter() - start)
    finally:
        OPERATION_COUNT.labels(function_name=name, status=status).inc()
        OPERATION_LATENCY.labels(function_name=name).observe(
            time.perf_counter() - start
        )


def monitor(
    metric_name: str,
    file_output: bool = False,
    json_serialize: bool = True,
    log_calls: bool = True,
) -> Callable[[Callable[P, R]], Callable[P, R]]:
    """
    Count, time and log a burrow operation, sync or async.

    Records inherit whatever is bound with ``log_context`` at call time, so a
    monitored optimizer run inside an experiment cell is tagged with the cell.

    Args:
        metric_name: the ``function_name`` label; a Prometheus-safe identifier.
        file_output: also log to ``./logs/<metric_name>.log``.
        json_serialize: JSON lines in that file.
        log_calls: log start and finish. Off for per-candidate or per-edge
            operations; failures are logged regardless.

    Raises:
        ValueError: if ``metric_name`` is not a valid label value.

    Example:
        @monitor("optimize_gnc")
        def optimize_gnc(graph: PoseGraph, params: GncParams) -> OptimizationResult:
            ...
    """
    validate_metric_name(metric_name)

    def decorator(func: Callable[P, R]) -> Callable[P, R]:
        if inspect.isgeneratorfunction(func) or inspect.isasyncgenfunction(func):
            warnings.warn(
                f"@monitor on generator function '{func.__name__}' times only "
                "the creation of the generator, not its iteration.",
                UserWarning,
                stacklevel=2,
            )
        log = Logger(
            metric_name, file_output=file_output, json_serialize=json_serialize
        ).setup()

        if inspect.iscoroutinefunction(func):

            @functools.wraps(func)
            async def async_wrapper(*args: P.args, **kwargs: P.kwargs) -> Any:
                with _measured(metric_name, log, log_calls):
                    return await func(*args, **kwargs)

            return cast(Callable[P, R], async_wrapper)

        @functools.wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> Any:
            with _measured(metric_name, log, log_calls):
                return func(*args, **kwargs)

        return cast(Callable[P, R], wrapper)

    return decorator
