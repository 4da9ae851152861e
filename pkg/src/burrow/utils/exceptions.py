from collections.abc import Iterable
from typing import Any

from pydantic import ValidationError


class BurrowException(Exception):
    """
    Base exception for all burrow exceptions.
    """


class ConfigValidationError(BurrowException):
    """
    Raised when settings or a parameter group fail validation.
    """

    def __init__(self, problems: list[str]) -> None:
        self.problems = problems
        super().__init__("invalid configuration: " + "; ".join(problems))

    @classmethod
    def from_pydantic(cls, error: ValidationError) -> "ConfigValidationError":
        """One problem per failing field of a `pydantic.ValidationError`."""
        return cls(
            [
                f"{'.'.join(str(p) for p in e['loc']) or e['type']}: {e['msg']}"
                for e in error.errors()
            ]
        )


class TaskNameRequiredError(BurrowException):
    """
    Raised when a task name is required but not provided.
    """


# --- geometry ---
class GeometryError(BurrowException):
    """
    Base class for SE(3) failures.
    """


class GimbalBoundaryError(GeometryError):
    """
    Raised when the SE(3) log is requested at a rotation angle too close to pi.
    """


# --- pose graph ---
class GraphError(BurrowException):
    """
    Base class for pose-graph construction and I/O failures.
    """


class SegmentGapError(GraphError):
    """
    Raised when an incoming segment does not continue the robot's index chain.
    """

    def __init__(self, robot_id: int, expected: int, got: int) -> None:
        self.robot_id = robot_id
        self.expected = expected
        self.got = got
        super().__init__(
            f"robot {robot_id}: segment starts at index {got}, expected {expected}"
        )


class SegmentConflictError(GraphError):
    """
    Raised when a duplicate key arrives with content that differs from the stored one.
    """

    def __init__(self, key: Any, reason: str = "conflicting content") -> None:
        self.key = key
        super().__init__(f"node {key}: {reason}")


class GraphParseError(GraphError):
    """
    Raised when a graph file line cannot be parsed.
    """

    def __init__(self, line_number: int, reason: str) -> None:
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class GraphValidationError(GraphError):
    """
    Raised when graph content violates a structural invariant
    (non-PSD information, dangling edge endpoint, ...).
    """


class ScanFormatError(GraphError):
    """
    Raised when a keyed-scan file or buffer has a bad magic, version or size.
    """


# --- front-end ---
class FrontendError(BurrowException):
    """
    Base class for single-robot front-end failures.
    """


class StreamLengthMismatchError(FrontendError):
    """
    Raised when cloud and extrinsic lists differ in length.
    """


# --- registration ---
class RegistrationError(BurrowException):
    """
    Base class for registration failures that cannot be reported as a flagged result.
    """


class DegenerateTriangleError(RegistrationError):
    """
    Raised when a fiducial triplet is collinear.
    """


class AmbiguousCorrespondenceError(RegistrationError):
    """
    Raised when fiducial triangles cannot be matched unambiguously by side lengths.
    """


# --- back-end ---
class OptimizationError(BurrowException):
    """
    Base class for pose-graph optimization failures.
    """


class UnderconstrainedGraphError(OptimizationError):
    """
    Raised when a connected component carries no prior, leaving the normal
    equations singular.
    """

    def __init__(self, component_keys: Iterable[Any]) -> None:
        self.component_keys = sorted(component_keys)
        preview = ", ".join(str(k) for k in self.component_keys[:5])
        more = "" if len(self.component_keys) <= 5 else ", ..."
        super().__init__(
            f"component without prior ({len(self.component_keys)} nodes): "
            f"{preview}{more}"
        )


# --- station ---
class ProtocolError(BurrowException):
    """
    Base class for wire-protocol failures.
    """


class FrameDecodeError(ProtocolError):
    """
    Raised when a frame or payload cannot be decoded.
    """


class BatchRejectedError(ProtocolError):
    """
    Raised when the station refuses a batch in a way a resend cannot fix.
    """

    def __init__(self, sequence: int, code: str, text: str) -> None:
        self.sequence = sequence
        self.code = code
        super().__init__(f"batch {sequence} rejected with {code}: {text}")


# --- simulator ---
class SimulationError(BurrowException):
    """
    Base class for simulator failures.
    """


class RouteOutsideWorldError(SimulationError):
    """
    Raised when a robot route leaves the corridor free space.
    """


# --- evaluation ---
class EvaluationError(BurrowException):
    """
    Base class for metric computation failures.
    """


class EmptyIntersectionError(EvaluationError):
    """
    Raised when estimated and ground-truth trajectories share no keys.
    """
