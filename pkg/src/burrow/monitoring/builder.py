from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, TypeVar, cast

from prometheus_client import (
    REGISTRY,
    CollectorRegistry,
    Counter,
    Gauge,
    Histogram,
    Summary,
)
from prometheus_client.metrics import MetricWrapperBase

M = TypeVar("M", bound=MetricWrapperBase)

# registration and optimization take seconds, not milliseconds
SOLVER_BUCKETS = (0.005, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0)


@dataclass
class MetricBuilder:
    """
    Creates burrow metrics under the ``burrow`` namespace.

    Building a metric whose name is already registered returns the registered
    collector, so module reloads and repeated builders in tests do not fail.
    """

    name: str
    documentation: str
    labelnames: Iterable[str] = ()
    namespace: str = "burrow"
    subsystem: str = ""  # "station", "backend", ...
    unit: str = ""
    registry: CollectorRegistry = field(default=REGISTRY)

    def __post_init__(self) -> None:
        self.labelnames = tuple(self.labelnames)

    @property
    def full_name(self) -> str:
        return "_".join(p for p in (self.namespace, self.subsystem, self.name) if p)

    def counter(self) -> Counter:
        return self._get_or_create(Counter)

    def gauge(self) -> Gauge:
        return self._get_or_create(Gauge)

    def histogram(self, buckets: Sequence[float] = SOLVER_BUCKETS) -> Histogram:
        return self._get_or_create(Histogram, buckets=buckets)

    def summary(self) -> Summary:
        return self._get_or_create(Summary)

    def _lookup(self) -> MetricWrapperBase | None:
        # prometheus_client has no public lookup by name
        return getattr(self.registry, "_names_to_collectors", {}).get(self.full_name)

    def _get_or_create(self, kind: type[M], **options: Any) -> M:
        for attempt in range(2):
            found = self._lookup()
            if found is not None:
                return cast(M, found)
            if attempt:
                break
            try:
                return kind(
                    self.name,
                    self.documentation,
                    labelnames=self.labelnames,
                    namespace=self.namespace,
                    subsystem=self.subsystem,
                    unit=self.unit,
                    registry=self.registry,
                    **options,
                )
            except ValueError:
                # lost a registration race; the second lookup finds the winner
                continue
        raise ValueError(f"metric {self.full_name!r} clashes with a registered one")
