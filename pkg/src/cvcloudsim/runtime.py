"""Emulated function execution.

Two modes over the same processing-time model: event-triggered serverless
execution with cold starts, per-function capacity, and parallel shards; and a
server-based baseline with a fixed worker pool served FIFO. "Parallelism" is
virtual-time overlap on the engine's single logical thread.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from .engine import Engine, SimTime
from .kvstore import ChangeEvent, KvStore
from .latency import LatencyModel

MAX_FUNCTION_MEMORY_MB = 3008

# Application handler: (store, triggering events, now) -> writes to apply,
# each as (table, key, value).
Handler = Callable[[KvStore, list[ChangeEvent], SimTime], list[tuple[str, str, dict]]]


@dataclass
class FunctionSpec:
    name: str
    capacity: int
    memory_mb: int
    proc_model: LatencyModel
    handler: Handler
    cold_start_ms: int = 0
    keep_alive_ms: int = 300_000
    per_record_ms: int = 0

    def __post_init__(self):
        if not 0 < self.memory_mb <= MAX_FUNCTION_MEMORY_MB:
            raise ValueError(
                f"memory_mb must be in (0, {MAX_FUNCTION_MEMORY_MB}], got {self.memory_mb}")
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if self.cold_start_ms < 0 or self.keep_alive_ms < 0 or self.per_record_ms < 0:
            raise ValueError("timing fields must be non-negative")


@dataclass(frozen=True)
class ShardPlan:
    capacity: int
    assignment: dict[str, int]
    shard_count: int


def plan_shards(vehicle_ids: Iterable[str], capacity: int) -> ShardPlan:
    """Deterministic sorted-fill split of the fleet into capacity-sized shards."""
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    ordered = sorted(set(vehicle_ids))
    assignment = {vid: i // capacity for i, vid in enumerate(ordered)}
    return ShardPlan(capacity, assignment, math.ceil(len(ordered) / capacity))


@dataclass(frozen=True)
class InvocationRecord:
    function: str
    shard_index: int
    txn_ids: tuple[str, ...]
    t_dispatch: SimTime
    t_start: SimTime
    t_end: SimTime
    records_processed: int
    cold: bool

    @property
    def wait_ms(self) -> int:
        return self.t_start - self.t_dispatch

    @property
    def duration_ms(self) -> int:
        return self.t_end - self.t_start


StartHook = Callable[[InvocationRecord], None]
EndHook = Callable[[InvocationRecord, list], None]


@dataclass
class _Shard:
    index: int
    busy_until: SimTime = 0
    last_end: SimTime | None = None
    pending: deque = field(default_factory=deque)  # (ChangeEvent, arrival)


@dataclass
class _Function:
    spec: FunctionSpec
    plan: ShardPlan
    shards: list[_Shard]


class _RuntimeBase:
    def __init__(self, engine: Engine, store: KvStore, rng: random.Random,
                 start_offset_ms: int = 0):
        self.engine = engine
        self.store = store
        self.rng = rng
        self.start_offset_ms = start_offset_ms
        self.invocations: list[InvocationRecord] = []
        self._start_hooks: list[StartHook] = []
        self._end_hooks: list[EndHook] = []

    def on_invocation_start(self, hook: StartHook) -> None:
        self._start_hooks.append(hook)

    def on_invocation_end(self, hook: EndHook) -> None:
        self._end_hooks.append(hook)

    def _duration(self, spec: FunctionSpec, t_start: SimTime, records: int) -> int:
        proc = spec.proc_model.sample(t_start, self.rng, self.start_offset_ms)
        return proc + spec.per_record_ms * records

    def _run_invocation(self, spec: FunctionSpec, inv: InvocationRecord,
                        events: list[ChangeEvent],
                        on_complete: Callable[[], None]) -> None:
        outputs: list[tuple[str, str, dict]] = []

        def start():
            outputs.extend(spec.handler(self.store, events, inv.t_start))
            for hook in self._start_hooks:
                hook(inv)

        def end():
            puts = [self.store.put(table, key, value, inv.t_end)
                    for table, key, value in outputs]
            self.invocations.append(inv)
            for hook in self._end_hooks:
                hook(inv, puts)
            on_complete()

        self.engine.schedule(inv.t_start, "invoke-start", start,
                             note=f"{spec.name}#{inv.shard_index} x{inv.records_processed}")
        self.engine.schedule(inv.t_end, "invoke-end", end,
                             note=f"{spec.name}#{inv.shard_index}")


class ServerlessRuntime(_RuntimeBase):
    """Change-stream-triggered functions with shard-level batching."""

    def __init__(self, engine, store, rng, start_offset_ms: int = 0):
        super().__init__(engine, store, rng, start_offset_ms)
        self._functions: dict[str, _Function] = {}

    def register_function(self, spec: FunctionSpec, trigger_table: str,
                          plan: ShardPlan) -> None:
        if spec.name in self._functions:
            raise ValueError(f"function {spec.name!r} already registered")
        if not self.store.has_table(trigger_table):
            raise ValueError(f"trigger table {trigger_table!r} does not exist")
        shards = [_Shard(i) for i in range(plan.shard_count)]
        state = _Function(spec, plan, shards)
        self._functions[spec.name] = state
        self.store.add_trigger(trigger_table, lambda event: self._dispatch(state, event))

    def _dispatch(self, fn: _Function, event: ChangeEvent) -> None:
        at = self.engine.now
        vehicle = event.new_value["vehicle_id"]
        try:
            shard = fn.shards[fn.plan.assignment[vehicle]]
        except KeyError:
            raise KeyError(f"vehicle {vehicle!r} is not in the shard plan") from None
        # Joining a non-empty queue keeps FIFO order even when an arrival and
        # a completion land on the same millisecond.
        if shard.busy_until > at or shard.pending:
            shard.pending.append((event, at))
        else:
            self._start_batch(fn, shard, [(event, at)], at)

    def _start_batch(self, fn: _Function, shard: _Shard,
                     entries: list[tuple[ChangeEvent, SimTime]], at: SimTime) -> None:
        spec = fn.spec
        cold = shard.last_end is None or (at - shard.last_end) > spec.keep_alive_ms
        t_start = at + (spec.cold_start_ms if cold else 0)
        t_end = t_start + self._duration(spec, t_start, len(entries))
        shard.busy_until = t_end
        events = [event for event, _ in entries]
        inv = InvocationRecord(
            function=spec.name, shard_index=shard.index,
            txn_ids=tuple(event.key for event in events),
            t_dispatch=entries[0][1], t_start=t_start, t_end=t_end,
            records_processed=len(entries), cold=cold)

        def complete():
            shard.last_end = t_end
            # A same-millisecond arrival may have claimed the shard already;
            # only start the next batch if it is actually free.
            if shard.pending and shard.busy_until <= t_end:
                batch = [shard.pending.popleft()
                         for _ in range(min(spec.capacity, len(shard.pending)))]
                self._start_batch(fn, shard, batch, t_end)

        self._run_invocation(spec, inv, events, complete)


class ServerBasedRuntime(_RuntimeBase):
    """Fixed worker pool; each change event is one FIFO-served invocation."""

    def __init__(self, engine, store, worker_count: int, rng,
                 start_offset_ms: int = 0):
        super().__init__(engine, store, rng, start_offset_ms)
        if worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {worker_count}")
        self.worker_count = worker_count
        self._busy_until = [0] * worker_count
        self._queue: deque = deque()  # (ChangeEvent, arrival)
        self._spec: FunctionSpec | None = None

    def register_function(self, spec: FunctionSpec, trigger_table: str) -> None:
        if self._spec is not None:
            raise ValueError("worker pool already has a function bound")
        if not self.store.has_table(trigger_table):
            raise ValueError(f"trigger table {trigger_table!r} does not exist")
        self._spec = spec
        self.store.add_trigger(trigger_table, self._dispatch)

    def _dispatch(self, event: ChangeEvent) -> None:
        at = self.engine.now
        if not self._queue:
            for worker, busy_until in enumerate(self._busy_until):
                if busy_until <= at:
                    self._start_one(worker, event, arrival=at, at=at)
                    return
        self._queue.append((event, at))

    def _start_one(self, worker: int, event: ChangeEvent, arrival: SimTime,
                   at: SimTime) -> None:
        spec = self._spec
        t_end = at + self._duration(spec, at, 1)
        self._busy_until[worker] = t_end
        inv = InvocationRecord(
            function=spec.name, shard_index=worker, txn_ids=(event.key,),
            t_dispatch=arrival, t_start=at, t_end=t_end,
            records_processed=1, cold=False)

        def complete():
            # Skip if a same-millisecond arrival already took this worker.
            if self._queue and self._busy_until[worker] <= t_end:
                next_event, next_arrival = self._queue.popleft()
                self._start_one(worker, next_event, next_arrival, t_end)

        self._run_invocation(spec, inv, [event], complete)

    def utilization(self, horizon: SimTime) -> float:
        """Fraction of total worker-time spent busy over [0, horizon]."""
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        busy = sum(max(0, min(inv.t_end, horizon) - min(inv.t_start, horizon))
                   for inv in self.invocations)
        return busy / (self.worker_count * horizon)


def write_invocations_csv(path: str | Path, invocations: list[InvocationRecord]) -> None:
    lines = ["function,shard,t_dispatch,t_start,t_end,records,cold"]
    for inv in invocations:
        lines.append(f"{inv.function},{inv.shard_index},{inv.t_dispatch},"
                     f"{inv.t_start},{inv.t_end},{inv.records_processed},"
                     f"{'true' if inv.cold else 'false'}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
