import threading
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import replace
from typing import Protocol

from burrow.graph.model import KeyedScan, NodeKey
from burrow.loops.candidates import LoopCandidate
from burrow.monitoring.loggers import get_logger
from burrow.registration.observability import observability_score

log = get_logger(__name__)


class Scorer(Protocol):
    """Ranks loop candidates; higher scores are computed first."""

    # False keeps the incoming queue order instead of sorting by score
    reorders: bool

    def score(
        self, candidate: LoopCandidate, scans: Mapping[NodeKey, KeyedScan]
    ) -> float: ...


class ObservabilityScorer:
    """min(observability of scan a, observability of scan b), cached per key."""

    reorders = True

    def __init__(self) -> None:
        self._cache: dict[NodeKey, float] = {}
        self._lock = threading.Lock()

    def _scan_score(self, scan: KeyedScan) -> float:
        with self._lock:
            cached = self._cache.get(scan.key)
        if cached is None:
            cached = observability_score(scan.points())
            with self._lock:
                self._cache[scan.key] = cached
        return cached

    def score(
        self, candidate: LoopCandidate, scans: Mapping[NodeKey, KeyedScan]
    ) -> float:
        return min(
            self._scan_score(scans[candidate.key_a]),
            self._scan_score(scans[candidate.key_b]),
        )


class QueueOrderScorer:
    """No prioritization: candidates are computed in the order they were queued."""

    reorders = False

    def score(
        self, candidate: LoopCandidate, scans: Mapping[NodeKey, KeyedScan]
    ) -> float:
        return 0.0


def prioritize(
    candidates: Sequence[LoopCandidate],
    scans: Mapping[NodeKey, KeyedScan],
    budget: int,
    scorer: Scorer | None = None,
    counters: Counter[str] | None = None,
) -> list[LoopCandidate]:
    """
    Score, order and truncate candidates to `budget`.

    Order is descending score, then ascending gap, then keys. Candidates whose
    scans are missing are dropped and counted under "dropped".
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    scorer = scorer or ObservabilityScorer()
    scored: list[LoopCandidate] = []
    dropped = 0
    for candidate in candidates:
        if candidate.key_a not in scans or candidate.key_b not in scans:
            dropped += 1
            continue
        scored.append(replace(candidate, priority=scorer.score(candidate, scans)))
    if dropped:
        log.warning("dropped %d loop candidates without keyed scans", dropped)
        if counters is not None:
            counters["dropped"] += dropped

    if scorer.reorders:
        scored.sort(key=lambda c: (-c.priority, c.euclidean_gap, c.key_a, c.key_b))
    return scored[:budget]
