import asyncio
from itertools import islice

import numpy as np
import pytest
from prometheus_client import REGISTRY

from burrow.backend.export import parse_trajectory, read_trajectory
from burrow.config import Config
from burrow.frontend.pipeline import FrontendOutput
from burrow.geometry.se3 import Pose6, se3_between
from burrow.graph.io import read_graph
from burrow.graph.model import EdgeKind, GraphEdge, KeyedScan, NodeKey
from burrow.graph.scans import MAP_KEY, decode_scan, read_scan
from burrow.loops.candidates import LoopCandidate, LoopKind
from burrow.loops.computation import LoopEdgeCandidateResult
from burrow.station import (
    ConnectivitySchedule,
    ResendLog,
    RobotClient,
    StationConfig,
    StationServer,
    StationState,
    client_session,
    decode_message,
    deliver_local,
    encode_message,
    handle_message,
    key_updates,
)
from burrow.station.client import backoff_delays
from burrow.station.protocol import (
    HEADER,
    Ack,
    ClientMessage,
    Error,
    ErrorCode,
    Hello,
    MapReply,
    RequestMap,
    RequestTrajectory,
    Segment,
    SegmentBatch,
    TrajectoryReply,
    TriggerOptimize,
    read_message,
    write_message,
)
from burrow.utils.exceptions import (
    BatchRejectedError,
    FrameDecodeError,
    UnderconstrainedGraphError,
)
from tests.conftest import chain_graph, straight_line


def _output(
    poses: list[Pose6], robot_id: int = 0, *, scans: bool = True
) -> FrontendOutput:
    """One key node per pose, a key every second, each with a 50-point scan."""
    graph = chain_graph(poses, robot_id, prior=False)
    row = np.column_stack([np.arange(50.0), np.ones(50), np.zeros(50)])
    keyed = [KeyedScan(key, row) for key in sorted(graph.nodes)] if scans else []
    return FrontendOutput(graph, keyed, [float(i) for i in range(len(poses))])


def _segments(poses: list[Pose6], robot_id: int = 0, **kwargs) -> list[Segment]:
    return [u.segment for u in key_updates(_output(poses, robot_id, **kwargs))]


def _session(count: int = 5, robot_id: int = 0) -> list[ClientMessage]:
    updates = key_updates(_output(straight_line(count, y=3.0 * robot_id), robot_id))
    return client_session(updates, ConnectivitySchedule.always(), robot_id)


def _messages_counted(message_type: str, outcome: str) -> float:
    value = REGISTRY.get_sample_value(
        "burrow_station_messages_total",
        {"message_type": message_type, "outcome": outcome},
    )
    return value or 0.0


@pytest.fixture
def state() -> StationState:
    return StationState(StationConfig(loop_closure=False))


# ---------------------------------------------------------------------------
# wire protocol
# ---------------------------------------------------------------------------


def test_segment_batch_survives_the_wire():
    batch = SegmentBatch(3, 7, tuple(_segments(straight_line(3), robot_id=3)))

    frame = encode_message(batch)

    assert HEADER.unpack_from(frame)[0] == len(frame) - HEADER.size
    decoded = decode_message(frame)
    assert decoded == batch
    assert decoded.segments[1].scans[0].key == NodeKey(3, 1)


def test_hello_carries_calibration():
    calibration = Pose6.from_yaw(30.0, (1.0, -2.0, 0.5))

    decoded = decode_message(encode_message(Hello(1, 0, calibration)))

    assert decoded == Hello(1, 0, calibration)


def test_error_reply_fields():
    error = Error(ErrorCode.GAP, "expected index 3, got 5", robot_id=2, last_acked=4)

    assert decode_message(encode_message(error)) == error


@pytest.mark.parametrize(
    "frame, message",
    [
        (b"\x00\x00", "shorter than its length prefix"),
        (HEADER.pack(0), "empty frame"),
        (HEADER.pack(1) + bytes([99]), "unknown message type"),
        (HEADER.pack(3) + bytes([6]) + b"\x00\x01", "truncated"),
        (encode_message(Ack(1, 2))[:-1], "does not match"),
    ],
)
def test_malformed_frames_rejected(frame, message):
    with pytest.raises(FrameDecodeError, match=message):
        decode_message(frame)


def test_trailing_bytes_rejected():
    frame = encode_message(Ack(1, 2)) + b"\x00"
    frame = HEADER.pack(len(frame) - HEADER.size) + frame[HEADER.size :]

    with pytest.raises(FrameDecodeError, match="trailing bytes"):
        decode_message(frame)


def test_bad_segment_text_is_a_decode_error():
    frame = bytearray(encode_message(SegmentBatch(0, 1, tuple(_segments([Pose6()])))))
    start = frame.index(b"VERTEX_SE3")
    frame[start : start + 6] = b"VERTEZ"

    with pytest.raises(FrameDecodeError, match="bad segment"):
        decode_message(bytes(frame))


def test_encode_rejects_foreign_objects():
    with pytest.raises(TypeError):
        encode_message("hello")  # type: ignore[arg-type]


def test_stream_reading():
    async def scenario():
        reader = asyncio.StreamReader()
        reader.feed_data(encode_message(Ack(0, 1)) + encode_message(Ack(0, 2)))
        reader.feed_eof()
        return [await read_message(reader) for _ in range(3)]

    assert asyncio.run(scenario()) == [Ack(0, 1), Ack(0, 2), None]


@pytest.mark.parametrize(
    "data, message",
    [
        (b"\x00\x00", "inside a length prefix"),
        (HEADER.pack(10) + b"\x06", "inside a frame"),
        (HEADER.pack(0), "out of range"),
    ],
)
def test_stream_errors(data, message):
    async def scenario():
        reader = asyncio.StreamReader()
        reader.feed_data(data)
        reader.feed_eof()
        return await read_message(reader)

    with pytest.raises(FrameDecodeError, match=message):
        asyncio.run(scenario())


# ---------------------------------------------------------------------------
# message handling
# ---------------------------------------------------------------------------


def test_hello_required_first(state):
    before = _messages_counted("SegmentBatch", "no_hello")
    batch = SegmentBatch(0, 1, tuple(_segments(straight_line(1))))

    (reply,) = handle_message(state, batch)

    assert reply == Error(ErrorCode.NO_HELLO, "send Hello first", 0, 0)
    assert state.graph.nodes == {}
    assert _messages_counted("SegmentBatch", "no_hello") == before + 1


def test_first_node_anchored_at_calibration(state):
    calibration = Pose6.from_yaw(90.0, (5.0, 0.0, 0.0))
    segments = _segments(straight_line(3))

    assert handle_message(state, Hello(0, 0, calibration)) == [Ack(0, 0)]
    assert handle_message(state, SegmentBatch(0, 1, tuple(segments))) == [Ack(0, 1)]

    nodes = state.graph.nodes
    np.testing.assert_allclose(nodes[NodeKey(0, 0)].pose.t, [5.0, 0.0, 0.0])
    np.testing.assert_allclose(nodes[NodeKey(0, 2)].pose.t, [5.0, 2.0, 0.0], atol=1e-12)
    (prior,) = state.graph.edges_of_kind(EdgeKind.PRIOR)
    assert prior.source == NodeKey(0, 0)
    assert prior.measurement == calibration
    assert sorted(state.scans) == sorted(nodes)
    assert list(state.new_nodes) == []


def test_new_nodes_queued_for_loop_closure():
    state = StationState(StationConfig())
    handle_message(state, Hello(0, 0))
    handle_message(state, SegmentBatch(0, 1, tuple(_segments(straight_line(3)))))

    assert list(state.new_nodes) == [NodeKey(0, i) for i in range(3)]


def test_duplicate_batch_acknowledged_without_reapplying(state):
    messages = _session(3)
    for message in messages[:2]:
        handle_message(state, message)
    graph = state.graph

    assert handle_message(state, messages[1]) == [Ack(0, 1)]
    assert state.graph is graph


def test_gap_reports_last_applied_sequence(state):
    hello, first, second, third = _session(3)
    handle_message(state, hello)
    handle_message(state, first)

    (reply,) = handle_message(state, third)

    assert reply.code is ErrorCode.GAP
    assert reply.last_acked == 1
    assert handle_message(state, second) == [Ack(0, 2)]
    assert handle_message(state, third) == [Ack(0, 3)]
    assert len(state.graph) == 3


def test_first_segment_must_start_at_zero(state):
    hello, _, second = _session(2)
    handle_message(state, hello)

    (reply,) = handle_message(state, second)

    assert reply.code is ErrorCode.GAP
    assert reply.last_acked == 0


def test_batch_is_all_or_nothing(state):
    segments = _segments(straight_line(3))
    handle_message(state, Hello(0, 0))

    (reply,) = handle_message(state, SegmentBatch(0, 1, (segments[0], segments[2])))

    assert reply.code is ErrorCode.GAP
    assert state.graph.nodes == {}
    assert state.scans == {}
    assert state.sessions[0].last_sequence == 0


def test_conflicting_segment_rejected(state):
    for message in _session(2):
        handle_message(state, message)
    stretched = _segments(straight_line(2, step=2.0))[1]

    (reply,) = handle_message(state, SegmentBatch(0, 3, (stretched,)))

    assert reply.code is ErrorCode.CONFLICT
    assert "odometric distance differs" in reply.text
    assert reply.last_acked == 2


def test_foreign_nodes_rejected(state):
    handle_message(state, Hello(0, 0))

    (reply,) = handle_message(
        state, SegmentBatch(0, 1, tuple(_segments(straight_line(1), robot_id=1)))
    )

    assert reply.code is ErrorCode.BAD_REQUEST
    assert "foreign nodes" in reply.text


def test_hello_resumes_at_last_sequence(state):
    messages = _session(3)
    for message in messages:
        handle_message(state, message)

    assert handle_message(state, messages[0]) == [Ack(0, 3)]


def test_requests_answer_from_current_estimate(state):
    for message in _session(4):
        handle_message(state, message)

    (trajectory,) = handle_message(state, RequestTrajectory(0, 10))
    (cloud,) = handle_message(state, RequestMap(0, 11, voxel=0.5))

    assert isinstance(trajectory, TrajectoryReply)
    assert sorted(parse_trajectory(trajectory.csv)) == sorted(state.graph.nodes)
    assert isinstance(cloud, MapReply)
    assert decode_scan(cloud.scan).key == MAP_KEY


def test_map_request_without_scans(state):
    handle_message(state, Hello(0, 0))
    segments = _segments(straight_line(2), scans=False)
    handle_message(state, SegmentBatch(0, 1, tuple(segments)))

    (reply,) = handle_message(state, RequestMap(0, 2))

    assert reply.code is ErrorCode.BAD_REQUEST
    assert reply.text == "map is empty"


def test_trigger_optimize(state):
    for message in _session(4):
        handle_message(state, message)

    assert handle_message(state, TriggerOptimize(0, 5)) == [Ack(0, 5)]
    assert state.result is not None
    assert state.result.mode == "icm+gnc"


def _failing_solver(*args, **kwargs):
    raise UnderconstrainedGraphError([NodeKey(0, 0)])


def test_failed_optimization_answers_error(state, monkeypatch):
    monkeypatch.setattr("burrow.station.state.optimize_graph", _failing_solver)
    for message in _session(4):
        handle_message(state, message)
    before = _messages_counted("TriggerOptimize", "error")

    (reply,) = handle_message(state, TriggerOptimize(0, 5))

    assert reply.code is ErrorCode.OPTIMIZE_FAILED
    assert "component without prior" in reply.text
    assert reply.last_acked == state.sessions[0].last_sequence
    assert state.result is None
    assert len(state.graph) == 4
    assert _messages_counted("TriggerOptimize", "error") == before + 1


def test_loop_results_committed_and_counted():
    state = StationState(StationConfig(loop_closure=False, auto_optimize_every=2))
    for message in _session(6):
        handle_message(state, message)
    truth = state.graph.poses()

    def result(a: int, b: int, accepted: bool = True) -> LoopEdgeCandidateResult:
        key_a, key_b = NodeKey(0, a), NodeKey(0, b)
        edge = GraphEdge(
            key_a, key_b, EdgeKind.LOOP_CLOSURE, se3_between(truth[key_a], truth[key_b])
        )
        candidate = LoopCandidate(key_a, key_b, LoopKind.INTRA_ROBOT, float(a - b))
        return LoopEdgeCandidateResult(candidate, None, None, accepted, edge)

    assert state.add_loop_results([result(5, 0), result(4, 1, accepted=False)]) == 1
    assert not state.optimize_due()
    assert state.add_loop_results([result(5, 9)]) == 0
    assert state.add_loop_results([result(4, 0)]) == 1
    assert state.optimize_due()
    assert len(state.loop_results) == 4

    state.optimize()
    assert state.accepted_since_optimize == 0
    assert len(state.result.inlier_edges) == 2


def test_station_config_from_settings():
    settings = Config(ALPHA=0.5, TICK_BUDGET=2, OUTLIER_MODE="gnc")

    config = StationConfig.from_settings(settings, budget=None, prioritize=False)

    assert config.alpha == 0.5
    assert config.budget == 2
    assert config.outlier_mode == "gnc"
    assert config.prioritize is False
    assert config.generation().alpha == 0.5


def test_save_writes_station_outputs(state, tmp_path):
    deliver_local(state, _session(4))

    state.save(tmp_path)

    assert read_graph(tmp_path / "graph.g2o") == state.graph
    assert sorted(read_trajectory(tmp_path / "trajectory.csv")) == sorted(
        state.graph.nodes
    )
    assert read_scan(tmp_path / "map.kscn").key == MAP_KEY
    assert read_scan(tmp_path / "scans" / "0_3.kscn").key == NodeKey(0, 3)


# ---------------------------------------------------------------------------
# client side
# ---------------------------------------------------------------------------


def test_key_updates_split_per_node():
    output = _output(straight_line(3))
    output.segment.add_edge(
        GraphEdge(NodeKey(0, 0), NodeKey(0, 0), EdgeKind.PRIOR, Pose6())
    )

    updates = key_updates(output)

    assert [u.timestamp for u in updates] == [0.0, 1.0, 2.0]
    first, _, last = (u.segment for u in updates)
    assert list(first.graph.nodes) == [NodeKey(0, 0)]
    assert [e.kind for e in first.graph.edges] == [EdgeKind.PRIOR]
    assert [(e.source, e.target) for e in last.graph.edges] == [
        (NodeKey(0, 1), NodeKey(0, 2))
    ]
    assert [s.key for s in last.scans] == [NodeKey(0, 2)]


def test_key_updates_need_one_time_per_node():
    output = _output(straight_line(3))
    output.key_times.pop()

    with pytest.raises(ValueError, match="key timestamps"):
        key_updates(output)


def _node_indices(batch: SegmentBatch) -> list[int]:
    return [k.index for s in batch.segments for k in s.graph.nodes]


def test_client_session_batches_blackout_backlog():
    updates = key_updates(_output(straight_line(6)))
    schedule = ConnectivitySchedule(((2.0, 4.0),))

    hello, *batches = client_session(updates, schedule, robot_id=0)

    assert hello == Hello(0, 0, Pose6.identity())
    assert [b.sequence for b in batches] == [1, 2, 3, 4, 5]
    assert [_node_indices(b) for b in batches] == [[0], [1], [2, 3], [4], [5]]


def test_client_session_flushes_trailing_backlog():
    updates = key_updates(_output(straight_line(6)))
    schedule = ConnectivitySchedule(((4.0, 100.0),))

    _, *batches = client_session(updates, schedule, robot_id=0)

    assert [_node_indices(b) for b in batches] == [[0], [1], [2], [3], [4, 5]]


def test_connectivity_schedule():
    schedule = ConnectivitySchedule(((5.0, 6.0), (1.0, 2.0)))

    assert schedule.blackouts == ((1.0, 2.0), (5.0, 6.0))
    assert not schedule.connected(1.0)
    assert schedule.connected(2.0)
    assert ConnectivitySchedule.always().connected(1.0)
    with pytest.raises(ValueError, match="empty blackout"):
        ConnectivitySchedule(((3.0, 3.0),))


def test_resend_log_follows_replies():
    resend = ResendLog.from_messages(_session(3))
    assert not resend.done

    resend.on_hello_reply(Ack(0, 0))
    assert resend.next_batch().sequence == 1
    assert resend.on_reply(Ack(0, 1))
    assert resend.next_batch().sequence == 2
    assert resend.on_reply(Error(ErrorCode.GAP, "gap", 0, 1))
    assert resend.next_batch().sequence == 2
    assert resend.on_reply(Ack(0, 2))
    assert resend.next_batch().sequence == 3
    assert resend.on_reply(Ack(0, 3))
    assert resend.next_batch() is None
    assert resend.done


def test_resend_log_resumes_after_hello_ack():
    resend = ResendLog.from_messages(_session(3))

    resend.on_hello_reply(Ack(0, 2))

    assert resend.next_batch().sequence == 3


def test_resend_log_lost_session():
    resend = ResendLog.from_messages(_session(3))
    resend.on_hello_reply(Ack(0, 0))
    resend.next_batch()

    assert resend.on_reply(Error(ErrorCode.NO_HELLO, "send Hello first")) is False
    assert not resend.greeted
    assert resend.next_batch().sequence == 1


def test_resend_log_conflict_is_fatal():
    resend = ResendLog.from_messages(_session(3))
    resend.on_hello_reply(Ack(0, 0))
    resend.next_batch()

    with pytest.raises(BatchRejectedError) as exc_info:
        resend.on_reply(Error(ErrorCode.CONFLICT, "odometry measurement differs"))
    assert exc_info.value.sequence == 1
    assert exc_info.value.code == ErrorCode.CONFLICT


def test_resend_log_needs_hello():
    with pytest.raises(ValueError, match="no Hello"):
        ResendLog.from_messages(_session(2)[1:])


def test_deliver_local_applies_everything(state):
    resend = deliver_local(state, _session(5))

    assert resend.done
    assert resend.acked == 5
    assert sorted(state.graph.nodes) == [NodeKey(0, i) for i in range(5)]
    state.graph.validate()


def test_deliver_local_resumes_partial_session(state):
    messages = _session(5)
    for message in messages[:3]:
        handle_message(state, message)

    resend = deliver_local(state, messages)

    assert resend.acked == 5
    assert len(state.graph) == 5


def test_blackouts_do_not_change_the_merged_graph():
    def run(schedules: dict[int, ConnectivitySchedule]) -> StationState:
        state = StationState(StationConfig(loop_closure=False))
        for robot_id, schedule in schedules.items():
            output = _output(straight_line(6, y=3.0 * robot_id), robot_id)
            messages = client_session(key_updates(output), schedule, robot_id)
            deliver_local(state, messages)
        return state

    connected = run({0: ConnectivitySchedule(), 1: ConnectivitySchedule()})
    dropped = run(
        {
            0: ConnectivitySchedule(((0.0, 3.0),)),
            1: ConnectivitySchedule(((1.0, 2.0), (4.0, 9.0))),
        }
    )

    assert dropped.graph == connected.graph
    assert dropped.scans.keys() == connected.scans.keys()


def test_backoff_doubles_up_to_cap():
    assert list(islice(backoff_delays(0.25, 1.0), 5)) == [0.25, 0.5, 1.0, 1.0, 1.0]


# ---------------------------------------------------------------------------
# TCP server
# ---------------------------------------------------------------------------


def test_robot_client_delivers_over_tcp(state, tmp_path):
    messages = _session(4)

    async def scenario() -> ResendLog:
        server = StationServer(state, port=0, loop_workers=1, out_dir=tmp_path)
        await server.start()
        try:
            return await RobotClient("127.0.0.1", server.bound_port).run(messages)
        finally:
            await server.stop()

    resend = asyncio.run(scenario())

    assert resend.done
    assert len(state.graph) == 4
    assert (tmp_path / "graph.g2o").exists()


def test_server_answers_bad_frames(state):
    async def scenario() -> list[object]:
        server = StationServer(state, port=0, loop_workers=1)
        await server.start()
        try:
            reader, writer = await asyncio.open_connection(
                "127.0.0.1", server.bound_port
            )
            await write_message(writer, Ack(0, 1))
            replies = [await read_message(reader)]
            await write_message(writer, Hello(0, 0))
            replies.append(await read_message(reader))
            writer.write(HEADER.pack(1) + bytes([99]))
            await writer.drain()
            replies.append(await read_message(reader))
            replies.append(await read_message(reader))
            writer.close()
            await writer.wait_closed()
            return replies
        finally:
            await server.stop()

    not_client, hello_ack, bad_frame, closed = asyncio.run(scenario())

    assert not_client.code is ErrorCode.BAD_REQUEST
    assert not_client.text == "not a client message"
    assert hello_ack == Ack(0, 0)
    assert bad_frame.code is ErrorCode.BAD_REQUEST
    assert "unknown message type" in bad_frame.text
    assert closed is None


def test_loop_worker_survives_failed_optimization(monkeypatch):
    state = StationState(StationConfig(auto_optimize_every=1))
    monkeypatch.setattr("burrow.station.state.optimize_graph", _failing_solver)
    monkeypatch.setattr(state, "optimize_due", lambda: True)
    ticked: list[NodeKey] = []

    def tick(graph, scans, new_node=None):
        ticked.append(new_node)
        return []

    monkeypatch.setattr(state.frontend, "tick", tick)

    async def scenario() -> Error:
        server = StationServer(state, port=0, loop_workers=1)
        await server.start()
        try:
            await RobotClient("127.0.0.1", server.bound_port).run(_session(4))
            for _ in range(500):
                if len(ticked) == 4:
                    break
                await asyncio.sleep(0.01)
            reader, writer = await asyncio.open_connection(
                "127.0.0.1", server.bound_port
            )
            await write_message(writer, Hello(0, 0))
            await read_message(reader)
            await write_message(writer, TriggerOptimize(0, 99))
            reply = await read_message(reader)
            writer.close()
            await writer.wait_closed()
            return reply
        finally:
            await server.stop()

    reply = asyncio.run(scenario())

    assert ticked == [NodeKey(0, i) for i in range(4)]
    assert state.result is None
    assert reply.code is ErrorCode.OPTIMIZE_FAILED
