"""Traffic surveillance application handler.

Consumes trajectory change events, averages recent speeds per road segment
over a trailing window, and emits one feedback write per touched segment.
The handler is a pure function of the store snapshot and the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import SimTime
from .kvstore import ChangeEvent, KvRecord, KvStore

MPS_PER_MPH = 0.44704  # exact

DEFAULT_WINDOW_MS = 10_000


def mph(speed_mps: float) -> float:
    return speed_mps / MPS_PER_MPH


@dataclass(frozen=True)
class FeedbackRecord:
    segment_id: str
    avg_speed_mph: float
    n_samples: int
    computed_at: SimTime

    def as_value(self) -> dict:
        return {"segment_id": self.segment_id, "avg_speed_mph": self.avg_speed_mph,
                "n_samples": self.n_samples, "computed_at": self.computed_at}


def mean_speed_mph(records: list[KvRecord]) -> float:
    """Unweighted mean of the records' speeds, in mph (unrounded)."""
    if not records:
        raise ValueError("mean_speed over an empty record list")
    total = sum(r.value["speed_mps"] for r in records)
    return mph(total / len(records))


def _valid(value: dict) -> bool:
    speed = value.get("speed_mps")
    return isinstance(value.get("segment_id"), str) and isinstance(speed, (int, float))


def handle(store: KvStore, events: list[ChangeEvent], at: SimTime,
           window_ms: int = DEFAULT_WINDOW_MS, trajectory_table: str = "trajectory",
           counters: dict | None = None) -> list[FeedbackRecord]:
    """Average in-window speeds for every segment touched by the batch.

    Malformed trajectory records are skipped and counted; segments with no
    in-window samples produce no record.
    """
    touched = set()
    for event in events:
        if _valid(event.new_value):
            touched.add(event.new_value["segment_id"])
        elif counters is not None:
            counters["malformed_records"] = counters.get("malformed_records", 0) + 1

    speeds: dict[str, list[float]] = {seg: [] for seg in touched}
    for record in store.scan_recent(trajectory_table, "", window_ms, at):
        value = record.value
        per_segment = speeds.get(value.get("segment_id"))
        if per_segment is not None:
            speed = value.get("speed_mps")
            if isinstance(speed, (int, float)):
                per_segment.append(speed)

    out = []
    for segment in sorted(touched):
        in_window = speeds[segment]
        if not in_window:
            continue
        avg = mph(sum(in_window) / len(in_window))
        out.append(FeedbackRecord(segment, round(avg, 1), len(in_window), at))
    return out


def make_handler(window_ms: int, trajectory_table: str, feedback_table: str,
                 counters: dict | None = None):
    """Bind handle() into the runtime's (store, events, at) -> writes contract."""

    def handler(store: KvStore, events: list[ChangeEvent], at: SimTime):
        records = handle(store, events, at, window_ms, trajectory_table, counters)
        return [(feedback_table, record.segment_id, record.as_value())
                for record in records]

    return handler
