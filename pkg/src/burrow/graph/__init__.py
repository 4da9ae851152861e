from burrow.graph.io import parse_graph, read_graph, serialize_graph, write_graph
from burrow.graph.model import (
    DEFAULT_ODOMETRY_INFORMATION,
    EdgeKind,
    GraphEdge,
    GraphNode,
    KeyedScan,
    NodeKey,
    PoseGraph,
    make_prior,
    merge_segment,
)
from burrow.graph.scans import decode_scan, encode_scan, read_scan, write_scan

__all__ = [
    "DEFAULT_ODOMETRY_INFORMATION",
    "EdgeKind",
    "GraphEdge",
    "GraphNode",
    "KeyedScan",
    "NodeKey",
    "PoseGraph",
    "decode_scan",
    "encode_scan",
    "make_prior",
    "merge_segment",
    "parse_graph",
    "read_graph",
    "read_scan",
    "serialize_graph",
    "write_graph",
    "write_scan",
]
