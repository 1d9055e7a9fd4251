"""Simulated connected vehicles on a loop road.

Vehicles hold simple kinematic state (bounded random-walk speed, wrapping
position), emit telemetry messages through the upload delay model into the
trajectory table, subscribe to their current segment's feedback key, and close
their round-trip traces when the matching feedback delivery arrives.

Two drivers: the probe protocol serializes emissions per vehicle (each waits
for its feedback before sending again) and a free-running mode emits at a
fixed rate regardless of feedback.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from pathlib import Path

from .engine import Engine, SimTime, TransactionTrace
from .kvstore import KvRecord, KvStore, Subscription
from .latency import LatencyModel, bucket_of
from .metrics import DelaySample
from .runtime import InvocationRecord
from .surveillance import MPS_PER_MPH


@dataclass(frozen=True)
class Bsm:
    vehicle_id: str
    seq: int
    t_emit: SimTime
    position_m: float
    segment_id: str
    speed_mps: float

    def as_value(self) -> dict:
        return {"vehicle_id": self.vehicle_id, "seq": self.seq,
                "t_emit": self.t_emit, "position_m": self.position_m,
                "segment_id": self.segment_id, "speed_mps": self.speed_mps}


@dataclass(frozen=True)
class ReceivedFeedback:
    segment_id: str
    avg_speed_mph: float
    t_received: SimTime


@dataclass
class VehicleState:
    vehicle_id: str
    position_m: float
    speed_mps: float
    last_feedback: ReceivedFeedback | None = None


@dataclass(frozen=True)
class RoadSegment:
    segment_id: str
    start_m: float
    end_m: float


def segment_name(index: int) -> str:
    # Zero-padded so one segment id is never a prefix of another.
    return f"seg-{index:03d}"


def build_segments(road_length_m: float, n_segments: int) -> list[RoadSegment]:
    """Equal-length segments partitioning [0, road_length)."""
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    length = road_length_m / n_segments
    return [RoadSegment(segment_name(i), i * length, (i + 1) * length)
            for i in range(n_segments)]


def segment_of(position_m: float, road_length_m: float, n_segments: int) -> str:
    index = int(position_m * n_segments // road_length_m)
    return segment_name(min(index, n_segments - 1))


def step_vehicle(state: VehicleState, dt_ms: int, rng, *, speed_limit_mps: float,
                 walk_sigma_mps: float, road_length_m: float) -> VehicleState:
    """Advance one vehicle: random-walk speed clipped to [0.6*limit, limit],
    position wrapped modulo the loop length."""
    if dt_ms <= 0:
        raise ValueError("dt_ms must be positive")
    speed = state.speed_mps
    if walk_sigma_mps > 0:
        speed += rng.gauss(0.0, walk_sigma_mps)
    state.speed_mps = min(speed_limit_mps, max(0.6 * speed_limit_mps, speed))
    state.position_m = (state.position_m + state.speed_mps * dt_ms / 1000.0) % road_length_m
    return state


class Fleet:
    def __init__(self, engine: Engine, store: KvStore, upload_model: LatencyModel, *,
                 n_vehicles: int, road_length_m: float, n_segments: int,
                 speed_limit_mph: float, speed_walk_mps: float = 0.4,
                 start_offset_ms: int = 0, trajectory_table: str = "trajectory",
                 feedback_table: str = "feedback"):
        self.engine = engine
        self.store = store
        self.upload_model = upload_model
        self.road_length_m = road_length_m
        self.n_segments = n_segments
        self.speed_limit_mps = speed_limit_mph * MPS_PER_MPH
        self.speed_walk_mps = speed_walk_mps
        self.start_offset_ms = start_offset_ms
        self.trajectory_table = trajectory_table
        self.feedback_table = feedback_table

        self._upload_rng = engine.rng_stream("upload")
        self._walk_rng = engine.rng_stream("fleet")
        init_rng = engine.rng_stream("fleet-init")

        self.vehicles: dict[str, VehicleState] = {}
        for i in range(1, n_vehicles + 1):
            vid = f"cv-{i:04d}"
            self.vehicles[vid] = VehicleState(
                vid,
                position_m=init_rng.uniform(0.0, road_length_m),
                speed_mps=init_rng.uniform(0.6 * self.speed_limit_mps,
                                           self.speed_limit_mps))

        self.samples: list[DelaySample] = []
        self.counters: dict[str, int] = {"probes_opened": 0, "probes_closed": 0,
                                         "duplicate_deliveries": 0,
                                         "feedback_unknown_vehicle": 0}
        self.trace_rows: list[tuple] = []

        self._seq: dict[str, int] = {vid: 0 for vid in self.vehicles}
        self._last_emit: dict[str, SimTime] = {}
        self._subs: dict[str, Subscription] = {}
        self._traces: dict[str, TransactionTrace] = {}
        self._txn_segment: dict[str, str] = {}
        self._feedback_origin: dict[tuple[str, str, int], tuple[str, ...]] = {}
        self._probe_target: int | None = None

    @property
    def vehicle_ids(self) -> list[str]:
        return list(self.vehicles)

    def in_flight(self) -> int:
        return self.counters["probes_opened"] - self.counters["probes_closed"]

    # emission -------------------------------------------------------------

    def emit_bsm(self, vehicle_id: str, at: SimTime) -> Bsm:
        state = self.vehicles[vehicle_id]
        self._seq[vehicle_id] += 1
        segment = segment_of(state.position_m, self.road_length_m, self.n_segments)
        bsm = Bsm(vehicle_id, self._seq[vehicle_id], at, state.position_m,
                  segment, state.speed_mps)
        txn_id = f"{vehicle_id}#{bsm.seq}"
        self._traces[txn_id] = TransactionTrace(txn_id, vehicle_id, t_emit=at)
        self._txn_segment[txn_id] = segment
        self.counters["probes_opened"] += 1
        self._ensure_subscription(vehicle_id, segment)

        delay = self.upload_model.sample(at, self._upload_rng, self.start_offset_ms)
        self.engine.schedule(at + delay, "kv-write-arrival",
                             partial(self._store_bsm, bsm, txn_id), note=txn_id)
        self._last_emit[vehicle_id] = at
        fb = state.last_feedback
        self.trace_rows.append((vehicle_id, at, state.position_m, state.speed_mps,
                                fb.avg_speed_mph if fb else None))
        return bsm

    def _ensure_subscription(self, vehicle_id: str, segment: str) -> None:
        sub = self._subs.get(vehicle_id)
        if sub is not None and sub.key_prefix == segment:
            return
        if sub is not None:
            self.store.unsubscribe(sub)
        self._subs[vehicle_id] = self.store.subscribe(
            self.feedback_table, segment, partial(self._on_delivery, vehicle_id))

    def _store_bsm(self, bsm: Bsm, txn_id: str) -> None:
        now = self.engine.now
        self._traces[txn_id].t_stored = now
        self.store.put(self.trajectory_table, txn_id, bsm.as_value(), now)

    # runtime hooks ----------------------------------------------------------

    def note_invocation_start(self, inv: InvocationRecord) -> None:
        for txn_id in inv.txn_ids:
            trace = self._traces.get(txn_id)
            if trace is not None:
                trace.t_invoke_start = inv.t_start

    def note_invocation_end(self, inv: InvocationRecord,
                            puts: list[KvRecord]) -> None:
        for txn_id in inv.txn_ids:
            trace = self._traces.get(txn_id)
            if trace is not None:
                trace.t_invoke_end = inv.t_end
        for record in puts:
            contributing = tuple(t for t in inv.txn_ids
                                 if self._txn_segment.get(t) == record.key)
            if contributing:
                self._feedback_origin[(record.table, record.key,
                                       record.version)] = contributing

    # feedback ---------------------------------------------------------------

    def _on_delivery(self, vehicle_id: str, record: KvRecord, at: SimTime) -> None:
        value = record.value
        self.receive_feedback(vehicle_id, value.get("segment_id", record.key),
                              value.get("avg_speed_mph", 0.0), at, record)

    def receive_feedback(self, vehicle_id: str, segment_id: str,
                         avg_speed_mph: float, at: SimTime,
                         record: KvRecord | None = None) -> None:
        state = self.vehicles.get(vehicle_id)
        if state is None:
            self.counters["feedback_unknown_vehicle"] += 1
            return
        if state.last_feedback is None or at >= state.last_feedback.t_received:
            state.last_feedback = ReceivedFeedback(segment_id, avg_speed_mph, at)
        if record is None:
            return
        origin = self._feedback_origin.get(
            (record.table, record.key, record.version), ())
        for txn_id in origin:
            trace = self._traces.get(txn_id)
            if trace is None or trace.vehicle_id != vehicle_id:
                continue
            if trace.t_feedback is not None:
                self.counters["duplicate_deliveries"] += 1
                continue
            self._close(trace, at)

    def _close(self, trace: TransactionTrace, at: SimTime) -> None:
        trace.t_feedback = at
        self.samples.append(DelaySample(
            txn_id=trace.txn_id, vehicle_id=trace.vehicle_id, t_emit=trace.t_emit,
            upload_ms=trace.t_stored - trace.t_emit,
            wait_ms=trace.t_invoke_start - trace.t_stored,
            process_ms=trace.t_invoke_end - trace.t_invoke_start,
            download_ms=at - trace.t_invoke_end,
            total_ms=at - trace.t_emit,
            day_bucket=bucket_of(trace.t_emit, self.start_offset_ms)))
        self.counters["probes_closed"] += 1
        if self._probe_target is not None:
            self._next_probe(trace.vehicle_id, at)

    # drivers ----------------------------------------------------------------

    def _next_probe(self, vehicle_id: str, at: SimTime) -> None:
        if self._seq[vehicle_id] >= self._probe_target:
            return
        dt = at - self._last_emit[vehicle_id]
        if dt > 0:
            step_vehicle(self.vehicles[vehicle_id], dt, self._walk_rng,
                         speed_limit_mps=self.speed_limit_mps,
                         walk_sigma_mps=self.speed_walk_mps,
                         road_length_m=self.road_length_m)
        self.engine.schedule(at, "bsm-emit",
                             partial(self.emit_bsm, vehicle_id, at), note=vehicle_id)

    def run_probe_protocol(self, samples_per_vehicle: int) -> list[DelaySample]:
        """Each vehicle completes its full round trips back to back."""
        if samples_per_vehicle < 1:
            raise ValueError("samples_per_vehicle must be >= 1")
        self._probe_target = samples_per_vehicle
        for vid in self.vehicles:
            self.engine.schedule(self.engine.now, "bsm-emit",
                                 partial(self._emit_now, vid), note=vid)
        self.engine.drain()
        self._probe_target = None
        return self.samples

    def _emit_now(self, vehicle_id: str) -> None:
        self.emit_bsm(vehicle_id, self.engine.now)

    def run_free_running(self, hz: float, duration_ms: int) -> list[DelaySample]:
        """Fixed-rate emission until duration_ms, then drain in-flight work."""
        if hz <= 0 or duration_ms <= 0:
            raise ValueError("free-running mode needs hz > 0 and duration_ms > 0")
        period = max(1, round(1000.0 / hz))
        n = len(self.vehicles)
        for i, vid in enumerate(self.vehicles):
            stagger = round(i * period / n) % period if n else 0
            self.engine.schedule(stagger, "bsm-emit",
                                 partial(self._free_tick, vid, period, duration_ms),
                                 note=vid)
        self.engine.drain()
        return self.samples

    def _free_tick(self, vehicle_id: str, period: int, until_ms: int) -> None:
        now = self.engine.now
        last = self._last_emit.get(vehicle_id)
        if last is not None and now > last:
            step_vehicle(self.vehicles[vehicle_id], now - last, self._walk_rng,
                         speed_limit_mps=self.speed_limit_mps,
                         walk_sigma_mps=self.speed_walk_mps,
                         road_length_m=self.road_length_m)
        self.emit_bsm(vehicle_id, now)
        if now + period < until_ms:
            self.engine.schedule(now + period, "bsm-emit",
                                 partial(self._free_tick, vehicle_id, period, until_ms),
                                 note=vehicle_id)


def write_fleet_trace_csv(path: str | Path, rows: list[tuple]) -> None:
    lines = ["vehicle,t,position_m,speed_mps,last_feedback_mph"]
    for vehicle, t, position, speed, fb_mph in rows:
        fb = "" if fb_mph is None else fb_mph
        lines.append(f"{vehicle},{t},{position:.3f},{speed:.3f},{fb}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
