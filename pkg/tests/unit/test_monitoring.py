import asyncio
import logging
import warnings
from pathlib import Path

import pytest
from prometheus_client import (
    REGISTRY,
    CollectorRegistry,
    Counter,
    Gauge,
    Histogram,
    Summary,
)

from burrow import Logger, MetricBuilder, monitor
from burrow.monitoring.builder import SOLVER_BUCKETS
from burrow.monitoring.validation import (
    sanitize_filename,
    sanitize_log_filename,
    validate_metric_name,
)


def _operation_count(name: str, status: str) -> float:
    value = REGISTRY.get_sample_value(
        "burrow_operations_total", {"function_name": name, "status": status}
    )
    return value or 0.0


def test_metrics_builder():
    builder = MetricBuilder(
        name="loop_closures",
        documentation="loop closures accepted",
        labelnames=["robot"],
        namespace="test_namespace",
        subsystem="station",
        unit="total",
    )

    assert builder.name == "loop_closures"
    assert builder.labelnames == ("robot",)
    assert builder.full_name == "test_namespace_station_loop_closures"


def test_metrics_builder_with_defaults():
    builder = MetricBuilder(name="graph_edges", documentation="edges")

    assert builder.labelnames == ()
    assert builder.namespace == "burrow"
    assert builder.subsystem == ""
    assert builder.unit == ""
    assert builder.registry is REGISTRY
    assert builder.full_name == "burrow_graph_edges"


def test_metrics_builder_methods(fresh_registry: CollectorRegistry):
    def build(name: str) -> MetricBuilder:
        return MetricBuilder(name=name, documentation="doc", registry=fresh_registry)

    assert isinstance(build("a_counter").counter(), Counter)
    assert isinstance(build("a_gauge").gauge(), Gauge)
    assert isinstance(build("a_histogram").histogram(), Histogram)
    assert isinstance(build("a_summary").summary(), Summary)


def test_histogram_uses_solver_buckets(fresh_registry: CollectorRegistry):
    histogram = MetricBuilder(
        "solve_seconds", "doc", registry=fresh_registry
    ).histogram()
    histogram.observe(20.0)

    # 20 s lands in the 30 s bucket, past the prometheus default range
    assert fresh_registry.get_sample_value(
        "burrow_solve_seconds_bucket", {"le": "10.0"}
    ) == 0.0
    assert fresh_registry.get_sample_value(
        "burrow_solve_seconds_bucket", {"le": "30.0"}
    ) == 1.0
    assert SOLVER_BUCKETS[-1] == 60.0


def test_loggers_defaults():
    logger = Logger("test_logger")

    assert logger.logger == logging.getLogger("test_logger")
    assert logger.log_dir == Path("./logs")
    assert logger.level == logging.DEBUG
    assert logger.file_output is False
    assert logger.json_serialize is True


@pytest.mark.parametrize(
    "name, expected",
    [
        ("./logs/station%.log", "station_.log"),
        ("./logs/robot 1.log", "robot_1.log"),
        ("../../etc/passwd", "passwd"),
    ],
)
def test_sanitize_log_filename(name: str, expected: str):
    assert sanitize_log_filename(name) == expected


@pytest.mark.parametrize(
    "name, expected",
    [
        ("sample-consensus/icm+gnc", "sample-consensus_icm_gnc"),
        ("odom", "odom"),
        ("..", "default"),
    ],
)
def test_sanitize_filename(name: str, expected: str):
    assert sanitize_filename(name) == expected


@pytest.mark.parametrize("metric_name", ["_optimize", "optimizeGnc_2", "run_cell"])
def test_validate_metric_name(metric_name: str):
    assert validate_metric_name(metric_name) == metric_name


@pytest.mark.parametrize(
    "metric_name",
    ["icm+gnc", "loop-closure", "optimize gnc", "3_optimize", "", "a" * 65],
)
def test_validate_metric_name_with_invalid_name(metric_name: str):
    with pytest.raises(ValueError):
        validate_metric_name(metric_name)


def test_monitor_counts_success_and_error():
    @monitor(metric_name="test_monitor_solve")
    def solve(iterations: int) -> int:
        if iterations < 0:
            raise ValueError("negative iteration budget")
        return iterations

    before_ok = _operation_count("test_monitor_solve", "success")
    before_err = _operation_count("test_monitor_solve", "error")

    assert solve(5) == 5
    with pytest.raises(ValueError, match="negative iteration budget"):
        solve(-1)

    assert _operation_count("test_monitor_solve", "success") == before_ok + 1
    assert _operation_count("test_monitor_solve", "error") == before_err + 1


def test_monitor_async():
    @monitor(metric_name="test_monitor_async_serve", log_calls=False)
    async def serve(robots: int) -> str:
        await asyncio.sleep(0)
        if robots == 0:
            raise ValueError("no robots")
        return "served"

    assert asyncio.run(serve(2)) == "served"
    with pytest.raises(ValueError, match="no robots"):
        asyncio.run(serve(0))
    assert _operation_count("test_monitor_async_serve", "success") >= 1


def test_monitor_records_latency():
    @monitor(metric_name="test_monitor_latency", log_calls=False)
    def tick() -> None:
        return None

    tick()
    count = REGISTRY.get_sample_value(
        "burrow_operation_latency_seconds_count",
        {"function_name": "test_monitor_latency"},
    )
    assert count == 1.0


def test_monitor_preserves_metadata():
    @monitor(metric_name="test_monitor_wraps")
    def optimize() -> None:
        """Optimize the graph."""

    assert optimize.__name__ == "optimize"
    assert optimize.__doc__ == "Optimize the graph."


def test_monitor_rejects_invalid_name():
    with pytest.raises(ValueError):
        monitor(metric_name="icm+gnc")


def test_monitor_warns_on_generator_function():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")

        @monitor(metric_name="test_monitor_generator")
        def candidates():  # pyright: ignore[reportUnusedFunction]
            yield 1

        assert len(w) == 1
        assert issubclass(w[0].category, UserWarning)
        assert "generator function" in str(w[0].message)


def test_metrics_builder_with_isolated_registry(fresh_registry: CollectorRegistry):
    counter = MetricBuilder(
        name="isolated_counter", documentation="test", registry=fresh_registry
    ).counter()
    counter.inc()

    assert fresh_registry.get_sample_value("burrow_isolated_counter_total") == 1.0
    assert REGISTRY.get_sample_value("burrow_isolated_counter_total") is None
