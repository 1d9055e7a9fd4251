"""Emulated key-value tables with ordered change streams and subscriptions.

Two roles in the pipeline: the trajectory table receives telemetry writes and
its change stream triggers the application runtime at write time; the feedback
table fans each write out to prefix-matched subscribers after a sampled
download delay.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from operator import attrgetter
from pathlib import Path
from typing import Any, Callable

from .engine import Engine, SimTime
from .latency import LatencyModel


class UnknownTableError(KeyError):
    pass


@dataclass(frozen=True)
class KvRecord:
    table: str
    key: str
    value: dict[str, Any]
    version: int
    write_time: SimTime


@dataclass(frozen=True)
class ChangeEvent:
    table: str
    key: str
    new_value: dict[str, Any]
    stream_seq: int
    event_time: SimTime


# Delivery callback: (record, arrival_time) -> None
Subscriber = Callable[[KvRecord, SimTime], None]
TriggerFn = Callable[[ChangeEvent], None]


@dataclass
class Subscription:
    sub_id: str
    table: str
    key_prefix: str
    subscriber: Subscriber


@dataclass
class _Table:
    name: str
    versions: dict[str, list[KvRecord]] = field(default_factory=dict)
    write_log: list[KvRecord] = field(default_factory=list)
    write_times: list[SimTime] = field(default_factory=list)
    stream: list[ChangeEvent] = field(default_factory=list)
    triggers: list[TriggerFn] = field(default_factory=list)
    # Grouped by prefix so a put checks one entry per distinct prefix, not
    # one per subscriber.
    subs_by_prefix: dict[str, list[Subscription]] = field(default_factory=dict)


class KvStore:
    """Named tables driven entirely by the owning engine's event loop."""

    def __init__(self, engine: Engine, download_model: LatencyModel | None = None,
                 download_rng=None, start_offset_ms: int = 0):
        self.engine = engine
        self.download_model = download_model
        self.download_rng = download_rng
        self.start_offset_ms = start_offset_ms
        self._tables: dict[str, _Table] = {}
        self._next_sub = 0

    def create_table(self, name: str) -> None:
        if name in self._tables:
            raise ValueError(f"table {name!r} already exists")
        self._tables[name] = _Table(name)

    def has_table(self, name: str) -> bool:
        return name in self._tables

    def _table(self, name: str) -> _Table:
        try:
            return self._tables[name]
        except KeyError:
            raise UnknownTableError(name) from None

    def add_trigger(self, table: str, fn: TriggerFn) -> None:
        """Invoke fn(change_event) synchronously on every write to the table."""
        self._table(table).triggers.append(fn)

    def put(self, table: str, key: str, value: dict[str, Any],
            at: SimTime) -> KvRecord:
        tab = self._table(table)
        versions = tab.versions.setdefault(key, [])
        if versions and at < versions[-1].write_time:
            raise ValueError(
                f"write to {table}/{key} at t={at} precedes t={versions[-1].write_time}")
        record = KvRecord(table, key, value, len(versions) + 1, at)
        versions.append(record)
        tab.write_log.append(record)
        tab.write_times.append(at)
        event = ChangeEvent(table, key, value, len(tab.stream) + 1, at)
        tab.stream.append(event)
        for fn in tab.triggers:
            fn(event)
        if tab.subs_by_prefix:
            for prefix, subs in tab.subs_by_prefix.items():
                if key.startswith(prefix):
                    for sub in subs:
                        self._schedule_delivery(sub, record, at)
        return record

    def _delivery_delay(self, at: SimTime) -> int:
        if self.download_model is None:
            return 0
        return self.download_model.sample(at, self.download_rng, self.start_offset_ms)

    def _schedule_delivery(self, sub: Subscription, record: KvRecord,
                           at: SimTime) -> None:
        arrive = at + self._delivery_delay(at)
        note = ""
        if self.engine.keep_trace:
            note = f"{record.table}/{record.key}@v{record.version}->{sub.sub_id}"
        self.engine.schedule(arrive, "feedback-arrival",
                             lambda: sub.subscriber(record, arrive), note=note)

    def get(self, table: str, key: str, at: SimTime) -> dict[str, Any] | None:
        """Value of the highest version written at or before `at`, if any."""
        versions = self._table(table).versions.get(key)
        if not versions:
            return None
        for record in reversed(versions):
            if record.write_time <= at:
                return record.value
        return None

    def scan_recent(self, table: str, key_prefix: str, window_ms: int,
                    at: SimTime) -> list[KvRecord]:
        """Records with matching prefix written inside (at - window_ms, at]."""
        if window_ms <= 0:
            raise ValueError("window_ms must be positive")
        tab = self._table(table)
        lo = bisect_right(tab.write_times, at - window_ms)
        hi = bisect_right(tab.write_times, at)
        hits = tab.write_log[lo:hi]
        if key_prefix:
            hits = [r for r in hits if r.key.startswith(key_prefix)]
        hits.sort(key=attrgetter("write_time", "key"))
        return hits

    def subscribe(self, table: str, key_prefix: str,
                  subscriber: Subscriber) -> Subscription:
        """Push every future matching write to the subscriber, once each."""
        tab = self._table(table)
        sub = Subscription(f"sub-{self._next_sub}", table, key_prefix, subscriber)
        self._next_sub += 1
        tab.subs_by_prefix.setdefault(key_prefix, []).append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        tab = self._table(sub.table)
        group = tab.subs_by_prefix.get(sub.key_prefix)
        if group is None:
            return
        try:
            group.remove(sub)
        except ValueError:
            return
        if not group:
            del tab.subs_by_prefix[sub.key_prefix]

    def subscriptions(self, table: str) -> list[Subscription]:
        tab = self._table(table)
        return [sub for group in tab.subs_by_prefix.values() for sub in group]

    def stream(self, table: str) -> list[ChangeEvent]:
        return list(self._table(table).stream)

    def dump_table(self, table: str) -> dict[str, Any]:
        """Latest record per key as a plain JSON-ready document."""
        tab = self._table(table)
        doc = {}
        for key in sorted(tab.versions):
            latest = tab.versions[key][-1]
            doc[key] = {"value": latest.value, "version": latest.version,
                        "write_time": latest.write_time}
        return doc

    def write_dump(self, table: str, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.dump_table(table), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
