"""Success rate, SPL and detection-frequency metrics over trial records."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol, Sequence


class SdfMode(str, Enum):
    AS_WRITTEN = "as-written"  # S * d / max(2, d): any d >= 2 scores 1
    PENALIZING = "penalizing"  # S * 2 / max(2, d): extra attempts cost


class _Record(Protocol):
    success: int
    path_length: float
    shortest_length: float
    detections_made: int


@dataclass(frozen=True)
class Outcome:
    """Minimal record shape: success flag, detections, path and shortest lengths."""

    success: int
    detections_made: int = 0
    path_length: float = 0.0
    shortest_length: float = 1.0


@dataclass(frozen=True)
class MetricInput:
    records: tuple[_Record, ...]

    def __post_init__(self) -> None:
        if len(self.records) < 1:
            raise ValueError("MetricInput needs at least one record")

    @classmethod
    def of(cls, records: Iterable[_Record]) -> "MetricInput":
        return cls(tuple(records))

    @property
    def n(self) -> int:
        return len(self.records)


def _input(data: MetricInput | Sequence[_Record]) -> MetricInput:
    return data if isinstance(data, MetricInput) else MetricInput.of(data)


def sr(data: MetricInput | Sequence[_Record]) -> float:
    inp = _input(data)
    return 100.0 * sum(1 for r in inp.records if r.success) / inp.n


def spl(data: MetricInput | Sequence[_Record]) -> float:
    inp = _input(data)
    total = 0.0
    for r in inp.records:
        if r.shortest_length <= 0:
            raise ValueError(f"shortest length must be positive, got {r.shortest_length}")
        if r.success:
            total += r.shortest_length / max(r.path_length, r.shortest_length)
    return 100.0 * total / inp.n


def sdf(data: MetricInput | Sequence[_Record], mode: SdfMode | str = SdfMode.AS_WRITTEN) -> float:
    inp = _input(data)
    mode = SdfMode(mode)
    total = 0.0
    for r in inp.records:
        d = r.detections_made
        if d < 0:
            raise ValueError(f"detection count must be nonnegative, got {d}")
        if r.success:
            total += (d if mode is SdfMode.AS_WRITTEN else 2) / max(2, d)
    return 100.0 * total / inp.n


def summarize(data: MetricInput | Sequence[_Record], mode: SdfMode | str = SdfMode.AS_WRITTEN) -> dict[str, float]:
    inp = _input(data)
    return {"n": inp.n, "sr": sr(inp), "spl": spl(inp), "sdf": sdf(inp, mode)}
