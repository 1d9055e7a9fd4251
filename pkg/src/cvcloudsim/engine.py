"""Deterministic discrete-event core.

Provides the virtual millisecond clock, a totally ordered event queue, and
labeled random streams all derived from one master seed. An Engine is fully
self-contained plain-Python state: independent instances can run side by side
(one per sweep cell) and can be handed across threads between runs.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

SimTime = int  # non-negative milliseconds since scenario start


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(slots=True)
class ScheduledEvent:
    fire_at: SimTime
    seq: int
    kind: str
    action: Callable[[], None] = field(repr=False)
    note: str = ""


@dataclass
class TransactionTrace:
    """Timestamps of one message round trip, filled in as the pipeline advances.

    The fields, when present, are non-decreasing in the listed order; the total
    round-trip time is t_feedback - t_emit.
    """

    txn_id: str
    vehicle_id: str
    t_emit: SimTime
    t_stored: SimTime | None = None
    t_invoke_start: SimTime | None = None
    t_invoke_end: SimTime | None = None
    t_feedback: SimTime | None = None

    def stamps(self) -> list[SimTime]:
        order = (self.t_emit, self.t_stored, self.t_invoke_start,
                 self.t_invoke_end, self.t_feedback)
        return [t for t in order if t is not None]

    def in_order(self) -> bool:
        stamps = self.stamps()
        return all(a <= b for a, b in zip(stamps, stamps[1:]))

    @property
    def total_ms(self) -> SimTime | None:
        if self.t_feedback is None:
            return None
        return self.t_feedback - self.t_emit


def derive_seed(master_seed: int, label: str) -> int:
    """Stable 64-bit child seed for (master seed, stream label)."""
    digest = hashlib.sha256(f"{master_seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class Engine:
    """Single-threaded event loop over (fire_at, seq)-ordered events."""

    def __init__(self, seed: int, keep_trace: bool = False):
        self.seed = seed
        self.now: SimTime = 0
        self.processed = 0
        self.keep_trace = keep_trace
        self.trace: list[ScheduledEvent] = []
        self._heap: list[tuple[SimTime, int, ScheduledEvent]] = []
        self._next_seq = 0
        self._streams: dict[str, random.Random] = {}

    def schedule(self, fire_at: SimTime, kind: str,
                 action: Callable[[], None], note: str = "") -> ScheduledEvent:
        """Queue an event; scheduling in the past is a logic bug and raises."""
        fire_at = int(fire_at)
        if fire_at < self.now:
            raise SchedulingError(
                f"cannot schedule {kind!r} at t={fire_at}; clock is at t={self.now}")
        event = ScheduledEvent(fire_at, self._next_seq, kind, action, note)
        self._next_seq += 1
        heapq.heappush(self._heap, (event.fire_at, event.seq, event))
        return event

    def pending(self) -> int:
        return len(self._heap)

    def _fire(self, event: ScheduledEvent) -> None:
        self.now = event.fire_at
        if self.keep_trace:
            self.trace.append(event)
        self.processed += 1
        event.action()

    def run_until(self, end: SimTime) -> int:
        """Process every event with fire_at <= end; leaves the clock at end."""
        if end < self.now:
            raise SchedulingError(f"run_until({end}) but clock is at t={self.now}")
        count = 0
        while self._heap and self._heap[0][0] <= end:
            _, _, event = heapq.heappop(self._heap)
            self._fire(event)
            count += 1
        self.now = end
        return count

    def drain(self) -> int:
        """Process events until the queue is empty; clock stops at the last one."""
        count = 0
        while self._heap:
            _, _, event = heapq.heappop(self._heap)
            self._fire(event)
            count += 1
        return count

    def rng_stream(self, label: str) -> random.Random:
        """Named random stream; independent per label, reproducible per (seed, label)."""
        stream = self._streams.get(label)
        if stream is None:
            stream = random.Random(derive_seed(self.seed, label))
            self._streams[label] = stream
        return stream

    def write_trace(self, path: str | Path) -> None:
        """Tab-separated log of processed events: fire_at, seq, kind, note."""
        lines = [f"{e.fire_at}\t{e.seq}\t{e.kind}\t{e.note}" for e in self.trace]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
