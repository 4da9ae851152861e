from collections import Counter
from collections.abc import Mapping
from concurrent.futures import Executor

from burrow.graph.model import KeyedScan, NodeKey, PoseGraph
from burrow.loops.candidates import GenerationConfig, LoopCandidate, generate_candidates
from burrow.loops.computation import (
    Initializer,
    LoopEdgeCandidateResult,
    compute_loop_closure,
)
from burrow.loops.prioritization import ObservabilityScorer, Scorer, prioritize
from burrow.monitoring.loggers import get_logger
from burrow.monitoring.metrics import LOOP_CLOSURE_STAGE
from burrow.registration.types import AlignmentParams

log = get_logger(__name__)


class LoopFrontend:
    """
    Pending-queue state of the loop-closure front-end.

    Each `tick` adds the candidates of a new node to the queue, prioritizes the
    whole queue and computes at most `budget` of them; the rest wait for later
    ticks. A robot pair is never queued twice.
    """

    def __init__(
        self,
        params: AlignmentParams | None = None,
        generation: GenerationConfig | None = None,
        initializer: Initializer = Initializer.SAMPLE_CONSENSUS,
        budget: int = 5,
        scorer: Scorer | None = None,
        executor: Executor | None = None,
    ) -> None:
        if budget < 1:
            raise ValueError(f"budget must be >= 1, got {budget}")
        self.params = params or AlignmentParams()
        self.generation = generation or GenerationConfig()
        self.initializer = initializer
        self.budget = budget
        self.scorer: Scorer = scorer or ObservabilityScorer()
        self.executor = executor
        self.pending: list[LoopCandidate] = []
        self.counters: Counter[str] = Counter()
        self._seen: set[frozenset[NodeKey]] = set()

    def enqueue(self, graph: PoseGraph, new_node: NodeKey) -> int:
        fresh = [
            c
            for c in generate_candidates(graph, new_node, self.generation)
            if frozenset(c.pair) not in self._seen
        ]
        self._seen.update(frozenset(c.pair) for c in fresh)
        self.pending.extend(fresh)
        self.counters["generated"] += len(fresh)
        LOOP_CLOSURE_STAGE.labels(stage="generated").inc(len(fresh))
        return len(fresh)

    def tick(
        self,
        graph: PoseGraph,
        scans: Mapping[NodeKey, KeyedScan],
        new_node: NodeKey | None = None,
    ) -> list[LoopEdgeCandidateResult]:
        """Queue the candidates of `new_node` (if any) and compute one batch."""
        if new_node is not None:
            self.enqueue(graph, new_node)
        if not self.pending:
            return []
        ordered = prioritize(
            self.pending, scans, len(self.pending), self.scorer, self.counters
        )
        batch, self.pending = ordered[: self.budget], ordered[self.budget :]
        self.counters["prioritized"] += len(batch)
        results = self._compute(batch, graph, scans)
        accepted = sum(r.accepted for r in results)
        self.counters["computed"] += len(results)
        self.counters["accepted"] += accepted
        log.debug(
            "tick computed %d candidates, %d accepted, %d pending",
            len(results),
            accepted,
            len(self.pending),
        )
        return results

    def _compute(
        self,
        batch: list[LoopCandidate],
        graph: PoseGraph,
        scans: Mapping[NodeKey, KeyedScan],
    ) -> list[LoopEdgeCandidateResult]:
        if self.executor is None or len(batch) < 2:
            return [
                compute_loop_closure(c, graph, scans, self.params, self.initializer)
                for c in batch
            ]
        futures = [
            self.executor.submit(
                compute_loop_closure, c, graph, scans, self.params, self.initializer
            )
            for c in batch
        ]
        return [f.result() for f in futures]


def frontend_tick(
    state: LoopFrontend,
    graph: PoseGraph,
    scans: Mapping[NodeKey, KeyedScan],
    new_node: NodeKey,
) -> list[LoopEdgeCandidateResult]:
    return state.tick(graph, scans, new_node)
