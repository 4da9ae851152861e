"""
Pre-configured metrics for burrow.
"""

from burrow.monitoring.builder import MetricBuilder

# every @monitor-decorated operation, labelled success / error / cancelled
OPERATION_COUNT = MetricBuilder(
    name="operations_total",
    documentation="Total number of monitored operation calls",
    labelnames=["function_name", "status"],
).counter()

OPERATION_LATENCY = MetricBuilder(
    "operation_latency_seconds",
    "Time spent in a monitored operation",
    labelnames=["function_name"],
).histogram()

STATION_MESSAGES = MetricBuilder(
    "messages_total",
    "Messages handled by the base station",
    labelnames=["message_type", "outcome"],
    subsystem="station",
).counter()

# generated / prioritized / dropped / computed / accepted
LOOP_CLOSURE_STAGE = MetricBuilder(
    "loop_closures_total",
    "Loop-closure candidates per front-end stage",
    labelnames=["stage"],
).counter()

OPTIMIZATION_RUNS = MetricBuilder(
    "optimization_runs_total",
    "Back-end optimization runs",
    labelnames=["mode"],
    subsystem="backend",
).counter()

GRAPH_NODES = MetricBuilder(
    "graph_nodes",
    "Key nodes in the merged pose graph",
    subsystem="station",
).gauge()
