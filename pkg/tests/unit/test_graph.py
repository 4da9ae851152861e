from pathlib import Path

import numpy as np
import pytest

from burrow.geometry.se3 import Pose6
from burrow.graph.io import (
    HEADER,
    parse_graph,
    read_graph,
    serialize_graph,
    write_graph,
)
from burrow.graph.model import (
    DEFAULT_ODOMETRY_INFORMATION,
    EdgeKind,
    GraphEdge,
    GraphNode,
    KeyedScan,
    NodeKey,
    PoseGraph,
    check_information,
    make_prior,
    merge_segment,
)
from burrow.graph.scans import decode_scan, encode_scan, read_scan, write_scan
from burrow.utils.exceptions import (
    GraphParseError,
    GraphValidationError,
    ScanFormatError,
    SegmentConflictError,
    SegmentGapError,
)
from tests.conftest import chain_graph, straight_line


def _segment(graph: PoseGraph, keys: list[NodeKey]) -> PoseGraph:
    """The nodes `keys` of `graph` plus the edges ending at them."""
    wanted = set(keys)
    piece = PoseGraph(graph.nodes[k] for k in keys)
    for edge in graph.edges:
        end = edge.source if edge.kind is EdgeKind.PRIOR else edge.target
        if end in wanted:
            piece.add_edge(edge)
    return piece


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


class TestPoseGraph:
    def test_queries(self):
        graph = merge_segment(
            chain_graph(straight_line(3)), chain_graph(straight_line(2), 1)
        )

        assert graph.robots() == [0, 1]
        assert graph.robot_keys(1) == [NodeKey(1, 0), NodeKey(1, 1)]
        assert graph.last_index(0) == 2
        assert graph.last_index(5) is None
        assert len(graph.edges_of_kind(EdgeKind.PRIOR)) == 2
        edge = graph.odometry_edge_into(NodeKey(0, 2))
        assert edge is not None and edge.source == NodeKey(0, 1)
        assert [n.key for n in graph] == sorted(graph.nodes)

    def test_connected_components_ignore_priors(self):
        graph = merge_segment(
            chain_graph(straight_line(3)), chain_graph(straight_line(2), 1)
        )
        assert len(graph.connected_components()) == 2

        graph.add_edge(
            GraphEdge(NodeKey(0, 2), NodeKey(1, 0), EdgeKind.LOOP_CLOSURE, Pose6())
        )
        (component,) = graph.connected_components()
        assert len(component) == 5
        assert graph.loop_edges()[0][0] == len(graph.edges) - 1

    def test_with_poses_leaves_original(self):
        graph = chain_graph(straight_line(3))
        moved = graph.with_poses({NodeKey(0, 1): Pose6(translation=(9.0, 0.0, 0.0))})

        assert graph.nodes[NodeKey(0, 1)].pose == Pose6(translation=(1.0, 0.0, 0.0))
        assert moved.nodes[NodeKey(0, 1)].pose.translation == (9.0, 0.0, 0.0)
        assert moved.nodes[NodeKey(0, 1)].odometric_distance == 1.0

    def test_validate_rejects_dangling_endpoint(self):
        graph = chain_graph(straight_line(2))
        graph.add_edge(
            GraphEdge(NodeKey(0, 1), NodeKey(0, 7), EdgeKind.LOOP_CLOSURE, Pose6())
        )

        with pytest.raises(GraphValidationError, match="not in graph"):
            graph.validate()

    def test_validate_rejects_skipping_odometry(self):
        graph = chain_graph(straight_line(3))
        graph.add_edge(
            GraphEdge(NodeKey(0, 0), NodeKey(0, 2), EdgeKind.ODOMETRY, Pose6())
        )

        with pytest.raises(GraphValidationError, match="consecutive"):
            graph.validate()

    def test_validate_rejects_decreasing_distance(self):
        graph = chain_graph(straight_line(3))
        key = NodeKey(0, 2)
        graph.nodes[key] = GraphNode(key, graph.nodes[key].pose, 0.5)

        with pytest.raises(GraphValidationError, match="decreases"):
            graph.validate()

    @pytest.mark.parametrize(
        "information",
        [
            np.diag([1.0, 1.0, 1.0, 1.0, 1.0, -1.0]),
            np.triu(np.ones((6, 6))),
            np.zeros((6, 6)),
            np.eye(5),
        ],
    )
    def test_check_information_rejects(self, information: np.ndarray):
        with pytest.raises(GraphValidationError):
            check_information(information)

    def test_edges_are_immutable_and_unhashable(self):
        edge = GraphEdge(NodeKey(0, 0), NodeKey(0, 1), EdgeKind.ODOMETRY, Pose6())

        assert edge.information.flags.writeable is False
        with pytest.raises(TypeError):
            hash(edge)

    def test_keyed_scan_validation(self):
        with pytest.raises(GraphValidationError):
            KeyedScan(NodeKey(0, 0), np.zeros((0, 3)))
        with pytest.raises(GraphValidationError):
            KeyedScan(NodeKey(0, 0), np.array([[0.0, np.nan, 0.0]]))
        assert KeyedScan(NodeKey(0, 0), np.ones((2, 3))).cloud.dtype == np.float32


class TestMergeSegment:
    def test_segments_in_order_rebuild_the_chain(self):
        full = chain_graph(straight_line(6))
        merged = PoseGraph()
        for start in range(0, 6, 2):
            keys = [NodeKey(0, start), NodeKey(0, start + 1)]
            merged = merge_segment(merged, _segment(full, keys))

        assert merged.nodes == full.nodes
        assert sorted(map(str, (e.endpoints for e in merged.edges))) == sorted(
            map(str, (e.endpoints for e in full.edges))
        )

    def test_duplicate_segment_is_idempotent(self):
        full = chain_graph(straight_line(4))
        segment = _segment(full, [NodeKey(0, 2), NodeKey(0, 3)])
        once = merge_segment(_segment(full, [NodeKey(0, 0), NodeKey(0, 1)]), segment)

        assert merge_segment(once, segment) == once

    def test_gap_is_rejected(self):
        full = chain_graph(straight_line(6))
        head = _segment(full, [NodeKey(0, 0), NodeKey(0, 1)])

        with pytest.raises(SegmentGapError) as info:
            merge_segment(head, _segment(full, [NodeKey(0, 3)]))

        assert (info.value.robot_id, info.value.expected, info.value.got) == (0, 2, 3)

    def test_conflicting_duplicate_is_rejected(self):
        graph = chain_graph(straight_line(3))
        key = NodeKey(0, 2)
        changed = PoseGraph([GraphNode(key, graph.nodes[key].pose, 99.0)])

        with pytest.raises(SegmentConflictError):
            merge_segment(graph, changed)

    def test_conflicting_odometry_is_rejected(self):
        graph = chain_graph(straight_line(3))
        key = NodeKey(0, 2)
        segment = PoseGraph([graph.nodes[key]])
        segment.add_edge(
            GraphEdge(
                NodeKey(0, 1),
                key,
                EdgeKind.ODOMETRY,
                Pose6(translation=(5.0, 0.0, 0.0)),
            )
        )

        with pytest.raises(SegmentConflictError, match="odometry"):
            merge_segment(graph, segment)

    def test_new_nodes_chain_from_the_current_estimate(self):
        full = chain_graph(straight_line(3))
        head = _segment(full, [NodeKey(0, 0), NodeKey(0, 1)])
        # the station has since moved node 1
        head = head.with_poses({NodeKey(0, 1): Pose6(translation=(1.0, 2.0, 0.0))})

        merged = merge_segment(head, _segment(full, [NodeKey(0, 2)]))

        moved = merged.nodes[NodeKey(0, 2)].pose
        assert moved.translation == pytest.approx((2.0, 2.0, 0.0))

    def test_fresh_robot_without_its_odometry_source_is_rejected(self):
        full = chain_graph(straight_line(5), robot_id=2)
        tail = _segment(full, [NodeKey(2, 3), NodeKey(2, 4)])

        with pytest.raises(SegmentGapError) as info:
            merge_segment(PoseGraph(), tail)

        assert (info.value.robot_id, info.value.expected, info.value.got) == (2, 2, 3)

    def test_fresh_robot_starts_at_its_prior(self):
        start = Pose6.from_yaw(90.0, (10.0, 0.0, 0.0))
        segment = PoseGraph([GraphNode(NodeKey(3, 0), Pose6())])
        segment.add_edge(make_prior(NodeKey(3, 0), start))

        merged = merge_segment(PoseGraph(), segment)

        assert merged.nodes[NodeKey(3, 0)].pose == start

    def test_inputs_are_untouched(self):
        graph = chain_graph(straight_line(2))
        before = graph.copy()
        merge_segment(graph, chain_graph(straight_line(2), robot_id=1))

        assert graph == before


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------


def _sample_graph() -> PoseGraph:
    poses = [
        Pose6.from_rotvec([0.1, -0.2, 0.3], (0.1, 1.0 / 3.0, 2.0)),
        Pose6.from_yaw(17.0, (1.0, 2.0, 3.0)),
    ]
    graph = chain_graph(poses)
    info = DEFAULT_ODOMETRY_INFORMATION.copy()
    info[0, 3] = info[3, 0] = 1.5
    graph.add_edge(
        GraphEdge(NodeKey(0, 1), NodeKey(0, 0), EdgeKind.LOOP_CLOSURE, poses[0], info)
    )
    return graph


class TestGraphText:
    def test_round_trip_is_exact(self, tmp_path: Path):
        graph = _sample_graph()
        path = tmp_path / "graph" / "graph.txt"
        write_graph(graph, path)

        assert read_graph(path) == graph
        assert path.read_text().startswith(HEADER)

    def test_information_is_translation_first_on_disk(self):
        info = np.diag([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        graph = chain_graph(straight_line(1), prior=False)
        graph.add_edge(make_prior(NodeKey(0, 0), Pose6(), info))

        prior_line = serialize_graph(graph).splitlines()[-1].split()
        upper = [float(v) for v in prior_line[10:]]
        # diagonal of the 21 upper-triangular entries, row-major
        diagonal = [upper[i] for i in (0, 6, 11, 15, 18, 20)]
        assert diagonal == [4.0, 5.0, 6.0, 1.0, 2.0, 3.0]

    def test_comments_and_optional_distance(self):
        text = "\n".join(
            [
                HEADER,
                "",
                "# robot 0",
                "VERTEX_SE3 0 0 0.0 0.0 0.0 1.0 0.0 0.0 0.0",
            ]
        )
        graph = parse_graph(text)
        assert graph.nodes[NodeKey(0, 0)].odometric_distance == 0.0

    @pytest.mark.parametrize(
        "line, message",
        [
            ("VERTEX_SE3 0 0 1 2 3", "fields"),
            ("VERTEX_SE3 0 x 0 0 0 1 0 0 0", "integers"),
            ("VERTEX_SE3 -1 0 0 0 0 1 0 0 0", ">= 0"),
            ("VERTEX_SE3 0 0 nan 0 0 1 0 0 0", "non-finite"),
            ("VERTEX_SE3 0 0 0 0 0 0 0 0 0", "quaternion"),
            ("EDGE_SE3 FOO " + " ".join(["0"] * 32), "unknown edge kind"),
            ("NODE 0 0", "unknown record"),
        ],
    )
    def test_parse_errors_carry_line_number(self, line: str, message: str):
        with pytest.raises(GraphParseError, match=message) as info:
            parse_graph(f"{HEADER}\n{line}\n")

        assert info.value.line_number == 2

    def test_duplicate_vertices(self):
        vertex = "VERTEX_SE3 0 0 0.0 0.0 0.0 1.0 0.0 0.0 0.0"
        with pytest.raises(GraphValidationError, match="duplicate"):
            parse_graph(f"{vertex}\n{vertex}\n")

    def test_wire_segments_skip_validation(self):
        full = chain_graph(straight_line(3))
        text = serialize_graph(_segment(full, [NodeKey(0, 2)]))

        with pytest.raises(GraphValidationError):
            parse_graph(text)
        assert len(parse_graph(text, validate=False).edges) == 1


# ---------------------------------------------------------------------------
# keyed scans
# ---------------------------------------------------------------------------


class TestKeyedScanFormat:
    def test_file_round_trip(self, tmp_path: Path, rng: np.random.Generator):
        scan = KeyedScan(NodeKey(2, 40), rng.normal(size=(100, 3)))
        write_scan(scan, tmp_path / "scans" / "2_40.kscn")

        assert read_scan(tmp_path / "scans" / "2_40.kscn") == scan

    def test_header_layout(self):
        buffer = encode_scan(KeyedScan(NodeKey(1, 5), np.ones((2, 3))))

        assert buffer[:4] == b"KSCN"
        assert len(buffer) == 24 + 2 * 12

    @pytest.mark.parametrize(
        "mutate, message",
        [
            (lambda b: b"XXXX" + b[4:], "magic"),
            (lambda b: b[:4] + b"\x02\x00" + b[6:], "version"),
            (lambda b: b[:-4], "expected"),
            (lambda b: b[:10], "no header"),
        ],
    )
    def test_corrupt_buffers(self, mutate, message: str):
        buffer = encode_scan(KeyedScan(NodeKey(0, 0), np.ones((3, 3))))

        with pytest.raises(ScanFormatError, match=message):
            decode_scan(mutate(buffer))
