"""
Wire protocol between robot clients and the base station.

Frame: [4-byte big-endian length][1-byte message type][payload], where the
length counts the type byte and the payload. Graph segments travel in the
text graph format and keyed scans in the binary scan format.
"""

import asyncio
import struct
from dataclasses import dataclass, field
from enum import IntEnum, StrEnum
from typing import TypeAlias

from burrow.geometry.se3 import Pose6
from burrow.graph.io import parse_graph, serialize_graph
from burrow.graph.model import KeyedScan, PoseGraph
from burrow.graph.scans import decode_scan, encode_scan
from burrow.utils.exceptions import FrameDecodeError, GraphError

HEADER = struct.Struct(">I")
MAX_FRAME_SIZE = 256 * 1024 * 1024

_ROUTE = struct.Struct(">HQ")  # robot_id, sequence
_POSE = struct.Struct(">7d")
_COUNT = struct.Struct(">I")
_VOXEL = struct.Struct(">d")
_ACK = struct.Struct(">HQ")
_ERROR = struct.Struct(">HQ")  # robot_id, last applied sequence


class MessageType(IntEnum):
    HELLO = 1
    SEGMENT_BATCH = 2
    REQUEST_TRAJECTORY = 3
    REQUEST_MAP = 4
    TRIGGER_OPTIMIZE = 5
    ACK = 6
    ERROR = 7
    TRAJECTORY_REPLY = 8
    MAP_REPLY = 9


class ErrorCode(StrEnum):
    GAP = "GAP"
    NO_HELLO = "NO_HELLO"
    CONFLICT = "CONFLICT"
    BAD_REQUEST = "BAD_REQUEST"
    OPTIMIZE_FAILED = "OPTIMIZE_FAILED"


@dataclass(frozen=True)
class Segment:
    """A robot's pose-graph piece plus the keyed scans of its nodes."""

    graph: PoseGraph
    scans: tuple[KeyedScan, ...] = ()


@dataclass(frozen=True)
class Hello:
    robot_id: int
    sequence: int
    calibration: Pose6 = field(default_factory=Pose6.identity)


@dataclass(frozen=True)
class SegmentBatch:
    robot_id: int
    sequence: int
    segments: tuple[Segment, ...] = ()


@dataclass(frozen=True)
class RequestTrajectory:
    robot_id: int
    sequence: int


@dataclass(frozen=True)
class RequestMap:
    robot_id: int
    sequence: int
    voxel: float = 0.2


@dataclass(frozen=True)
class TriggerOptimize:
    robot_id: int
    sequence: int


@dataclass(frozen=True)
class Ack:
    robot_id: int
    sequence: int


@dataclass(frozen=True)
class Error:
    """`last_acked` is the robot's last applied sequence; resend after it."""

    code: ErrorCode
    text: str
    robot_id: int = 0
    last_acked: int = 0


@dataclass(frozen=True)
class TrajectoryReply:
    csv: str


@dataclass(frozen=True)
class MapReply:
    scan: bytes


ClientMessage: TypeAlias = (
    Hello | SegmentBatch | RequestTrajectory | RequestMap | TriggerOptimize
)
Message: TypeAlias = ClientMessage | Ack | Error | TrajectoryReply | MapReply

CLIENT_MESSAGE_TYPES = (
    Hello,
    SegmentBatch,
    RequestTrajectory,
    RequestMap,
    TriggerOptimize,
)


def _blob(data: bytes) -> bytes:
    return _COUNT.pack(len(data)) + data


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise FrameDecodeError(
                f"payload truncated: need {end} bytes, have {len(self.payload)}"
            )
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, layout: struct.Struct) -> tuple:  # type: ignore[type-arg]
        return layout.unpack(self.take(layout.size))

    def blob(self) -> bytes:
        (size,) = self.unpack(_COUNT)
        return self.take(size)

    def text(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameDecodeError(f"invalid utf-8 text: {exc}") from exc

    def done(self) -> None:
        if self.offset != len(self.payload):
            raise FrameDecodeError(
                f"{len(self.payload) - self.offset} trailing bytes in payload"
            )


def _encode_segment(segment: Segment) -> bytes:
    parts = [
        _blob(serialize_graph(segment.graph).encode()),
        _COUNT.pack(len(segment.scans)),
    ]
    parts.extend(_blob(encode_scan(scan)) for scan in segment.scans)
    return b"".join(parts)


def _decode_segment(reader: _Reader) -> Segment:
    try:
        # segments reference the node before them, so they are not self-contained
        graph = parse_graph(reader.text(), validate=False)
        (count,) = reader.unpack(_COUNT)
        scans = tuple(decode_scan(reader.blob()) for _ in range(count))
    except GraphError as exc:
        raise FrameDecodeError(f"bad segment: {exc}") from exc
    return Segment(graph, scans)


def _payload(message: Message) -> tuple[MessageType, bytes]:
    match message:
        case Hello(robot_id, sequence, calibration):
            pose = _POSE.pack(*calibration.as_vector())
            return MessageType.HELLO, _ROUTE.pack(robot_id, sequence) + pose
        case SegmentBatch(robot_id, sequence, segments):
            parts = [_ROUTE.pack(robot_id, sequence), _COUNT.pack(len(segments))]
            parts.extend(_encode_segment(s) for s in segments)
            return MessageType.SEGMENT_BATCH, b"".join(parts)
        case RequestTrajectory(robot_id, sequence):
            return MessageType.REQUEST_TRAJECTORY, _ROUTE.pack(robot_id, sequence)
        case RequestMap(robot_id, sequence, voxel):
            body = _ROUTE.pack(robot_id, sequence) + _VOXEL.pack(voxel)
            return MessageType.REQUEST_MAP, body
        case TriggerOptimize(robot_id, sequence):
            return MessageType.TRIGGER_OPTIMIZE, _ROUTE.pack(robot_id, sequence)
        case Ack(robot_id, sequence):
            return MessageType.ACK, _ACK.pack(robot_id, sequence)
        case Error(code, text, robot_id, last_acked):
            body = (
                _ERROR.pack(robot_id, last_acked)
                + _blob(code.value.encode())
                + _blob(text.encode())
            )
            return MessageType.ERROR, body
        case TrajectoryReply(csv):
            return MessageType.TRAJECTORY_REPLY, _blob(csv.encode())
        case MapReply(scan):
            return MessageType.MAP_REPLY, _blob(scan)
    raise TypeError(f"not a protocol message: {message!r}")


def encode_message(message: Message) -> bytes:
    """The complete frame for `message`, length prefix included."""
    kind, payload = _payload(message)
    return HEADER.pack(len(payload) + 1) + bytes([kind]) + payload


def decode_body(body: bytes) -> Message:
    """
    Decode a frame body (type byte plus payload).

    Raises:
        FrameDecodeError: on an unknown type, truncated or oversized payload,
            or content that fails to parse.
    """
    if not body:
        raise FrameDecodeError("empty frame")
    try:
        kind = MessageType(body[0])
    except ValueError:
        raise FrameDecodeError(f"unknown message type {body[0]}") from None
    reader = _Reader(body[1:])
    message = _decode_payload(kind, reader)
    reader.done()
    return message


def _decode_payload(kind: MessageType, reader: _Reader) -> Message:
    match kind:
        case MessageType.HELLO:
            robot_id, sequence = reader.unpack(_ROUTE)
            values = reader.unpack(_POSE)
            return Hello(robot_id, sequence, Pose6(values[3:], values[:3]))
        case MessageType.SEGMENT_BATCH:
            robot_id, sequence = reader.unpack(_ROUTE)
            (count,) = reader.unpack(_COUNT)
            segments = tuple(_decode_segment(reader) for _ in range(count))
            return SegmentBatch(robot_id, sequence, segments)
        case MessageType.REQUEST_TRAJECTORY:
            return RequestTrajectory(*reader.unpack(_ROUTE))
        case MessageType.REQUEST_MAP:
            robot_id, sequence = reader.unpack(_ROUTE)
            (voxel,) = reader.unpack(_VOXEL)
            return RequestMap(robot_id, sequence, voxel)
        case MessageType.TRIGGER_OPTIMIZE:
            return TriggerOptimize(*reader.unpack(_ROUTE))
        case MessageType.ACK:
            return Ack(*reader.unpack(_ACK))
        case MessageType.ERROR:
            robot_id, last_acked = reader.unpack(_ERROR)
            try:
                code = ErrorCode(reader.text())
            except ValueError as exc:
                raise FrameDecodeError(str(exc)) from None
            return Error(code, reader.text(), robot_id, last_acked)
        case MessageType.TRAJECTORY_REPLY:
            return TrajectoryReply(reader.text())
        case MessageType.MAP_REPLY:
            return MapReply(reader.blob())
    raise FrameDecodeError(f"unhandled message type {kind}")


def decode_message(frame: bytes) -> Message:
    """Decode one complete frame, length prefix included."""
    if len(frame) < HEADER.size:
        raise FrameDecodeError("frame shorter than its length prefix")
    (length,) = HEADER.unpack_from(frame)
    if length != len(frame) - HEADER.size:
        raise FrameDecodeError(
            f"length prefix {length} does not match {len(frame) - HEADER.size} bytes"
        )
    return decode_body(frame[HEADER.size :])


async def read_message(reader: asyncio.StreamReader) -> Message | None:
    """Next message from the stream, or None on a clean end of stream."""
    try:
        header = await reader.readexactly(HEADER.size)
    except asyncio.IncompleteReadError as exc:
        if exc.partial:
            raise FrameDecodeError("stream ended inside a length prefix") from exc
        return None
    (length,) = HEADER.unpack(header)
    if length == 0 or length > MAX_FRAME_SIZE:
        raise FrameDecodeError(f"frame length {length} out of range")
    try:
        body = await reader.readexactly(length)
    except asyncio.IncompleteReadError as exc:
        raise FrameDecodeError("stream ended inside a frame") from exc
    return decode_body(body)


async def write_message(writer: asyncio.StreamWriter, message: Message) -> None:
    writer.write(encode_message(message))
    await writer.drain()
