from burrow.config import Config
from burrow.geometry.se3 import Pose6
from burrow.graph.model import (
    EdgeKind,
    GraphEdge,
    GraphNode,
    KeyedScan,
    NodeKey,
    PoseGraph,
)
from burrow.monitoring.builder import MetricBuilder
from burrow.monitoring.decorators import monitor
from burrow.monitoring.loggers import Logger, log_context
from burrow.tasks.queue import burrow_task
from burrow.tasks.worker import celery_app

# __all__ defines what happens if someone types "from burrow import *"
__all__ = [
    "Config",
    "EdgeKind",
    "GraphEdge",
    "GraphNode",
    "KeyedScan",
    "Logger",
    "MetricBuilder",
    "NodeKey",
    "Pose6",
    "PoseGraph",
    "burrow_task",
    "celery_app",
    "log_context",
    "monitor",
]

__version__ = "0.1.0"
