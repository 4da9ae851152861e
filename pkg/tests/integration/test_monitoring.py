"""
Integration tests for the monitoring stack: the pre-built burrow metrics as
the station and back-end drive them, and logger output with context.
"""

import pytest
from prometheus_client import REGISTRY, CollectorRegistry

from burrow.monitoring.builder import MetricBuilder
from burrow.monitoring.loggers import Logger, log_context
from burrow.monitoring.metrics import (
    GRAPH_NODES,
    LOOP_CLOSURE_STAGE,
    OPTIMIZATION_RUNS,
    STATION_MESSAGES,
)


class TestPreBuiltMetrics:
    """The module-level metrics are registered under the burrow namespace."""

    def test_station_messages_counter(self):
        labels = {"message_type": "Hello", "outcome": "test_ack"}
        before = REGISTRY.get_sample_value("burrow_station_messages_total", labels)

        STATION_MESSAGES.labels(**labels).inc()

        after = REGISTRY.get_sample_value("burrow_station_messages_total", labels)
        assert after == (before or 0.0) + 1

    @pytest.mark.parametrize("stage", ["generated", "computed", "accepted"])
    def test_loop_closure_stage_counter(self, stage: str):
        before = REGISTRY.get_sample_value(
            "burrow_loop_closures_total", {"stage": stage}
        )
        LOOP_CLOSURE_STAGE.labels(stage=stage).inc(3)

        after = REGISTRY.get_sample_value(
            "burrow_loop_closures_total", {"stage": stage}
        )
        assert after == (before or 0.0) + 3

    def test_optimization_runs_and_graph_gauge(self):
        OPTIMIZATION_RUNS.labels(mode="gnc").inc()
        GRAPH_NODES.set(42)

        assert (
            REGISTRY.get_sample_value(
                "burrow_backend_optimization_runs_total", {"mode": "gnc"}
            )
            or 0.0
        ) >= 1.0
        assert REGISTRY.get_sample_value("burrow_station_graph_nodes") == 42.0

    def test_rebuilding_a_registered_metric_returns_it(self):
        again = MetricBuilder(
            "messages_total",
            "Messages handled by the base station",
            labelnames=["message_type", "outcome"],
            subsystem="station",
        ).counter()

        assert again is STATION_MESSAGES


class TestIsolatedRegistry:
    def test_counter_tracks_multiple_statuses(self, fresh_registry: CollectorRegistry):
        counter = MetricBuilder(
            name="batches",
            documentation="Batches by outcome",
            labelnames=["outcome"],
            registry=fresh_registry,
        ).counter()

        counter.labels(outcome="ack").inc()
        counter.labels(outcome="ack").inc()
        counter.labels(outcome="gap").inc()

        assert (
            fresh_registry.get_sample_value("burrow_batches_total", {"outcome": "ack"})
            == 2.0
        )
        assert (
            fresh_registry.get_sample_value("burrow_batches_total", {"outcome": "gap"})
            == 1.0
        )

    def test_histogram_observes_latency(self, fresh_registry: CollectorRegistry):
        histogram = MetricBuilder(
            name="solve_seconds",
            documentation="Solver time",
            labelnames=["mode"],
            registry=fresh_registry,
        ).histogram()

        histogram.labels(mode="gnc").observe(0.5)
        histogram.labels(mode="gnc").observe(1.5)

        labels = {"mode": "gnc"}
        assert (
            fresh_registry.get_sample_value("burrow_solve_seconds_count", labels)
            == 2.0
        )
        assert (
            fresh_registry.get_sample_value("burrow_solve_seconds_sum", labels) == 2.0
        )


class TestLoggerIntegration:
    def test_logger_emits_to_stderr_with_context(
        self, capsys: pytest.CaptureFixture[str]
    ):
        log = Logger("integration_output_test", json_serialize=False).setup()

        with log_context(robot_id=2, sequence=7):
            log.info("segment batch applied")

        captured = capsys.readouterr()
        assert "segment batch applied" in captured.err
        assert captured.out == ""
