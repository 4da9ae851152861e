"""
asyncio TCP front of the base station.

All state mutations run on one writer thread, fed by a queue; loop-closure
ticks run on their own thread against snapshots and commit through the
writer. Trajectory and map requests are answered from snapshots.
"""

import asyncio
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from pathlib import Path
from typing import TypeVar

from burrow.graph.model import KeyedScan, NodeKey, PoseGraph
from burrow.loops.computation import LoopEdgeCandidateResult
from burrow.monitoring.loggers import get_logger
from burrow.station.protocol import (
    CLIENT_MESSAGE_TYPES,
    ClientMessage,
    Error,
    ErrorCode,
    Message,
    RequestMap,
    RequestTrajectory,
    read_message,
    write_message,
)
from burrow.station.state import StationState, handle_message
from burrow.utils.exceptions import BurrowException, FrameDecodeError

log = get_logger(__name__)

T = TypeVar("T")


class StationServer:
    def __init__(
        self,
        state: StationState,
        host: str = "127.0.0.1",
        port: int = 7447,
        loop_workers: int = 4,
        out_dir: Path | None = None,
    ) -> None:
        self.state = state
        self.host = host
        self.port = port
        self.out_dir = out_dir
        self._server: asyncio.Server | None = None
        self._writer_pool = ThreadPoolExecutor(1, thread_name_prefix="station-writer")
        self._tick_pool = ThreadPoolExecutor(1, thread_name_prefix="station-loops")
        self._loop_pool = ThreadPoolExecutor(
            loop_workers, thread_name_prefix="station-registration"
        )
        state.frontend.executor = self._loop_pool
        self._nodes_ready = asyncio.Event()
        self._tasks: list[asyncio.Task[None]] = []

    @property
    def bound_port(self) -> int:
        """Actual listening port (useful when started with port 0)."""
        if self._server is None or not self._server.sockets:
            return self.port
        return int(self._server.sockets[0].getsockname()[1])

    async def write(self, operation: Callable[[], T]) -> T:
        """Run `operation` on the single writer thread."""
        return await asyncio.get_running_loop().run_in_executor(
            self._writer_pool, operation
        )

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._handle_client, self.host, self.port
        )
        self._tasks.append(asyncio.create_task(self._loop_worker()))
        log.info("station listening on %s:%d", self.host, self.bound_port)

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        assert self._server is not None
        async with self._server:
            await self._server.serve_forever()

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for task in self._tasks:
            task.cancel()
        await asyncio.gather(*self._tasks, return_exceptions=True)
        if self.out_dir is not None:
            await self.write(partial(self.state.save, self.out_dir))
        for pool in (self._loop_pool, self._tick_pool, self._writer_pool):
            pool.shutdown(wait=True)
        log.info("station stopped")

    async def dispatch(self, message: ClientMessage) -> list[Message]:
        if isinstance(message, (RequestTrajectory, RequestMap)):
            loop = asyncio.get_running_loop()
            return await loop.run_in_executor(
                None, handle_message, self.state, message
            )
        pending = len(self.state.new_nodes)
        replies = await self.write(lambda: handle_message(self.state, message))
        if len(self.state.new_nodes) > pending:
            self._nodes_ready.set()
        return replies

    async def _handle_client(
        self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        peer = writer.get_extra_info("peername")
        log.debug("client connected from %s", peer)
        try:
            while True:
                try:
                    message = await read_message(reader)
                except FrameDecodeError as exc:
                    log.warning("bad frame from %s: %s", peer, exc)
                    await write_message(writer, Error(ErrorCode.BAD_REQUEST, str(exc)))
                    break
                if message is None:
                    break
                if not isinstance(message, CLIENT_MESSAGE_TYPES):
                    await write_message(
                        writer, Error(ErrorCode.BAD_REQUEST, "not a client message")
                    )
                    continue
                for reply in await self.dispatch(message):
                    await write_message(writer, reply)
        except (ConnectionError, asyncio.IncompleteReadError):
            log.debug("client %s dropped", peer)
        finally:
            writer.close()
            try:
                await writer.wait_closed()
            except ConnectionError:
                pass

    async def _loop_worker(self) -> None:
        loop = asyncio.get_running_loop()
        while True:
            await self._nodes_ready.wait()
            self._nodes_ready.clear()
            while True:
                work = await self.write(self._take_node)
                if work is None:
                    break
                graph, scans, node = work
                try:
                    results = await loop.run_in_executor(
                        self._tick_pool, self.state.frontend.tick, graph, scans, node
                    )
                    await self.write(partial(self._commit, results))
                except BurrowException:
                    log.exception("loop closure after node %s failed", node)

    def _take_node(
        self,
    ) -> tuple[PoseGraph, dict[NodeKey, KeyedScan], NodeKey] | None:
        if not self.state.new_nodes:
            return None
        node = self.state.new_nodes.popleft()
        graph, scans = self.state.snapshot()
        return graph, scans, node

    def _commit(self, results: list[LoopEdgeCandidateResult]) -> None:
        added = self.state.add_loop_results(results)
        if added:
            log.info("committed %d loop closures", added)
        if self.state.optimize_due():
            self.state.optimize()
            if self.out_dir is not None:
                self.state.save(self.out_dir)
