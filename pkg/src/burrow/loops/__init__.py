from burrow.loops.candidates import (
    GenerationConfig,
    LoopCandidate,
    LoopKind,
    generate_candidates,
)
from burrow.loops.computation import (
    Initializer,
    LoopEdgeCandidateResult,
    compute_loop_closure,
    loop_information,
)
from burrow.loops.frontend import LoopFrontend, frontend_tick
from burrow.loops.prioritization import (
    ObservabilityScorer,
    QueueOrderScorer,
    Scorer,
    prioritize,
)

__all__ = [
    "GenerationConfig",
    "Initializer",
    "LoopCandidate",
    "LoopEdgeCandidateResult",
    "LoopFrontend",
    "LoopKind",
    "ObservabilityScorer",
    "QueueOrderScorer",
    "Scorer",
    "compute_loop_closure",
    "frontend_tick",
    "generate_candidates",
    "loop_information",
    "prioritize",
]
