"""
Robot side of the station link.

`client_session` turns a robot's key-node stream and its connectivity schedule
into the messages it sends: one batch per key node while in comms, the whole
backlog as a single batch on reconnect. `ResendLog` keeps every batch until
the station acknowledges it and rewinds on Error(GAP) or a reconnect, so the
same log drives both the TCP client and in-process delivery.
"""

import asyncio
from collections.abc import Awaitable, Callable, Iterator, Sequence
from dataclasses import dataclass, field

from burrow.frontend.pipeline import FrontendOutput
from burrow.geometry.se3 import Pose6
from burrow.graph.model import EdgeKind, PoseGraph
from burrow.monitoring.loggers import get_logger
from burrow.station.protocol import (
    Ack,
    ClientMessage,
    Error,
    ErrorCode,
    Hello,
    Message,
    Segment,
    SegmentBatch,
    read_message,
    write_message,
)
from burrow.station.state import StationState, handle_message
from burrow.utils.exceptions import BatchRejectedError, FrameDecodeError

log = get_logger(__name__)

MAX_BACKOFF = 10.0
_LINK_ERRORS = (ConnectionError, asyncio.IncompleteReadError, FrameDecodeError)


@dataclass(frozen=True)
class ConnectivitySchedule:
    """Half-open blackout intervals [start, end) in stream time, seconds."""

    blackouts: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.blackouts))
        for start, end in ordered:
            if end <= start:
                raise ValueError(f"empty blackout interval [{start}, {end})")
        object.__setattr__(self, "blackouts", ordered)

    @classmethod
    def always(cls) -> "ConnectivitySchedule":
        return cls()

    def connected(self, t: float) -> bool:
        return not any(start <= t < end for start, end in self.blackouts)


@dataclass(frozen=True)
class KeyUpdate:
    timestamp: float
    segment: Segment


def key_updates(output: FrontendOutput) -> list[KeyUpdate]:
    """
    Split a front-end result into one segment per key node: the node, the
    edges ending at it (odometry from its predecessor, its prior) and its scan.
    """
    scans = {scan.key: scan for scan in output.scans}
    keys = sorted(output.segment.nodes)
    if len(output.key_times) != len(keys):
        raise ValueError(
            f"{len(keys)} key nodes but {len(output.key_times)} key timestamps"
        )
    updates: list[KeyUpdate] = []
    for key, timestamp in zip(keys, output.key_times, strict=True):
        piece = PoseGraph([output.segment.nodes[key]])
        for edge in output.segment.edges:
            ends_here = edge.target == key
            if edge.kind is EdgeKind.PRIOR:
                ends_here = edge.source == key
            if ends_here:
                piece.add_edge(edge)
        scan = (scans[key],) if key in scans else ()
        updates.append(KeyUpdate(timestamp, Segment(piece, scan)))
    return updates


def client_session(
    updates: Sequence[KeyUpdate],
    schedule: ConnectivitySchedule,
    robot_id: int,
    calibration: Pose6 | None = None,
) -> list[ClientMessage]:
    """
    Messages a robot sends for `updates` under `schedule`, in order.

    Starts with Hello. A key node produced in comms goes out as its own batch;
    key nodes produced during a blackout queue up and leave as one batch when
    comms return. A backlog still queued when the stream ends is flushed last.
    Batch sequences start at 1.
    """
    messages: list[ClientMessage] = [
        Hello(robot_id, 0, calibration or Pose6.identity())
    ]
    backlog: list[Segment] = []

    def send(segments: list[Segment]) -> None:
        messages.append(SegmentBatch(robot_id, len(messages), tuple(segments)))

    for update in sorted(updates, key=lambda u: u.timestamp):
        if not schedule.connected(update.timestamp):
            backlog.append(update.segment)
            continue
        if backlog:
            send(backlog)
            backlog = []
        send([update.segment])
    if backlog:
        log.info("robot %d: flushing %d queued segments", robot_id, len(backlog))
        send(backlog)
    return messages


@dataclass
class ResendLog:
    """
    Outgoing batches of one robot, kept until acknowledged.

    Acks are cumulative: the station applies batches in sequence order, so an
    Ack for n means everything up to n is applied.
    """

    hello: Hello
    batches: list[SegmentBatch]
    acked: int = 0
    cursor: int = field(default=0, init=False)
    greeted: bool = field(default=False, init=False)

    @classmethod
    def from_messages(cls, messages: Sequence[ClientMessage]) -> "ResendLog":
        hellos = [m for m in messages if isinstance(m, Hello)]
        if not hellos:
            raise ValueError("session has no Hello")
        batches = sorted(
            (m for m in messages if isinstance(m, SegmentBatch)),
            key=lambda b: b.sequence,
        )
        return cls(hellos[0], batches)

    @property
    def done(self) -> bool:
        last = self.batches[-1].sequence if self.batches else 0
        return self.greeted and self.acked >= last

    def rewind(self, last_acked: int) -> None:
        """Resend everything after `last_acked`."""
        self.acked = max(self.acked, last_acked)
        self.cursor = next(
            (i for i, b in enumerate(self.batches) if b.sequence > self.acked),
            len(self.batches),
        )

    def next_batch(self) -> SegmentBatch | None:
        if self.cursor >= len(self.batches):
            return None
        batch = self.batches[self.cursor]
        self.cursor += 1
        return batch

    def on_hello_reply(self, reply: Message) -> None:
        """The Ack to Hello carries the last applied sequence; resume after it."""
        self.on_reply(reply)
        self.greeted = isinstance(reply, Ack)
        self.rewind(self.acked)

    def on_reply(self, reply: Message) -> bool:
        """
        Record a station reply. Returns False when the session must start
        over with Hello.

        Raises:
            BatchRejectedError: on CONFLICT or BAD_REQUEST.
        """
        match reply:
            case Ack(sequence=sequence):
                self.acked = max(self.acked, sequence)
                return True
            case Error(code=ErrorCode.GAP, last_acked=last):
                log.info("gap reported, resending after batch %d", last)
                self.rewind(last)
                return True
            case Error(code=ErrorCode.NO_HELLO, last_acked=last):
                self.rewind(last)
                self.greeted = False
                return False
            case Error(code=code, text=text):
                sequence = self.batches[max(self.cursor - 1, 0)].sequence
                raise BatchRejectedError(sequence, code, text)
        log.warning("ignoring unexpected reply %s", type(reply).__name__)
        return True


def deliver_local(
    state: StationState,
    messages: Sequence[ClientMessage],
    now: float | None = None,
) -> ResendLog:
    """Run a robot session against an in-process station until fully acked."""
    resend = ResendLog.from_messages(messages)
    while not resend.done:
        (reply,) = handle_message(state, resend.hello, now)
        resend.on_hello_reply(reply)
        while (batch := resend.next_batch()) is not None:
            replies = handle_message(state, batch, now)
            if not all(resend.on_reply(r) for r in replies):
                break
    return resend


def backoff_delays(
    initial: float = 0.25, cap: float = MAX_BACKOFF
) -> Iterator[float]:
    delay = initial
    while True:
        yield delay
        delay = min(delay * 2.0, cap)


class RobotClient:
    """
    TCP client replaying a session to the station.

    Sends one batch at a time and waits for its reply. Connection failures
    are retried forever with exponential backoff capped at `max_backoff`;
    each reconnect starts with Hello, whose Ack tells the client where to
    resume.
    """

    def __init__(
        self,
        host: str,
        port: int,
        *,
        initial_backoff: float = 0.25,
        max_backoff: float = MAX_BACKOFF,
        sleep: Callable[[float], Awaitable[None]] = asyncio.sleep,
    ) -> None:
        self.host = host
        self.port = port
        self.initial_backoff = initial_backoff
        self.max_backoff = max_backoff
        self._sleep = sleep

    async def run(self, messages: Sequence[ClientMessage]) -> ResendLog:
        resend = ResendLog.from_messages(messages)
        delays = backoff_delays(self.initial_backoff, self.max_backoff)
        robot_id = resend.hello.robot_id
        while not resend.done:
            try:
                reader, writer = await asyncio.open_connection(self.host, self.port)
            except OSError as exc:
                delay = next(delays)
                log.warning(
                    "robot %d: connect failed (%s), retry in %.2fs",
                    robot_id,
                    exc,
                    delay,
                )
                await self._sleep(delay)
                continue
            delays = backoff_delays(self.initial_backoff, self.max_backoff)
            try:
                await self._exchange(reader, writer, resend)
            except _LINK_ERRORS as exc:
                delay = next(delays)
                log.warning(
                    "robot %d: link dropped (%s), retry in %.2fs",
                    robot_id,
                    exc,
                    delay,
                )
                await self._sleep(delay)
            finally:
                writer.close()
                try:
                    await writer.wait_closed()
                except ConnectionError:
                    pass
        log.info("robot %d: all %d batches acknowledged", robot_id, resend.acked)
        return resend

    async def _exchange(
        self,
        reader: asyncio.StreamReader,
        writer: asyncio.StreamWriter,
        resend: ResendLog,
    ) -> None:
        await write_message(writer, resend.hello)
        resend.on_hello_reply(await self._reply(reader))
        while (batch := resend.next_batch()) is not None:
            await write_message(writer, batch)
            if not resend.on_reply(await self._reply(reader)):
                raise ConnectionError("station lost the session")

    @staticmethod
    async def _reply(reader: asyncio.StreamReader) -> Message:
        reply = await read_message(reader)
        if reply is None:
            raise ConnectionError("station closed the connection")
        return reply
