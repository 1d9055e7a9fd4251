"""Scenario assembly and execution.

Wires one engine, the two tables, the delay models, the runtime, and the
fleet into a complete pipeline, runs it to quiescence, and packages samples,
invocations, and the QoS report. Sweeps run one independent engine per cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

from .config import ScenarioConfig
from .engine import Engine
from .fleet import Fleet
from .kvstore import KvStore
from .latency import BUCKET_MS, LatencyModel
from .metrics import DelaySample, QosReport, build_report, percentile, report_to_dict
from .runtime import (FunctionSpec, InvocationRecord, ServerBasedRuntime,
                      ServerlessRuntime, plan_shards)
from .surveillance import make_handler

FUNCTION_NAME = "traffic-surveillance"


@dataclass
class RunResult:
    config: ScenarioConfig
    samples: list[DelaySample]
    invocations: list[InvocationRecord]
    report: QosReport | None
    counters: dict[str, int]
    engine: Engine
    store: KvStore
    fleet: Fleet
    utilization: float | None = None

    @property
    def passed(self) -> bool:
        return self.report is not None and self.report.passed

    def p95_wait_ms(self) -> int | None:
        if not self.invocations:
            return None
        return percentile([inv.wait_ms for inv in self.invocations], 95)

    def report_dict(self) -> dict:
        extras: dict = {"counters": dict(sorted(self.counters.items()))}
        wait = self.p95_wait_ms()
        if wait is not None:
            extras["invocation_wait_p95_ms"] = wait
        if self.utilization is not None:
            extras["worker_utilization"] = round(self.utilization, 6)
        return report_to_dict(self.report, self.samples, extras)


def build_models(cfg: ScenarioConfig) -> dict[str, LatencyModel]:
    multipliers = cfg.diurnal_multipliers()
    return {direction: LatencyModel.from_targets(
                direction, targets.mean_ms, targets.p95_ms, multipliers[direction])
            for direction, targets in cfg.targets.items()}


def run_scenario(cfg: ScenarioConfig, keep_trace: bool = False) -> RunResult:
    cfg.validate()
    engine = Engine(cfg.seed, keep_trace=keep_trace)
    offset = cfg.start_offset_ms
    models = build_models(cfg)

    store = KvStore(engine, download_model=models["download"],
                    download_rng=engine.rng_stream("download"),
                    start_offset_ms=offset)
    store.create_table("trajectory")
    store.create_table("feedback")

    fleet = Fleet(engine, store, models["upload"],
                  n_vehicles=cfg.n_vehicles, road_length_m=cfg.road_length_m,
                  n_segments=cfg.n_segments, speed_limit_mph=cfg.speed_limit_mph,
                  speed_walk_mps=cfg.speed_walk_mps, start_offset_ms=offset)

    handler = make_handler(cfg.window_ms, "trajectory", "feedback", fleet.counters)
    spec = FunctionSpec(
        name=FUNCTION_NAME, capacity=cfg.function.capacity,
        memory_mb=cfg.function.memory_mb, proc_model=models["process"],
        handler=handler, cold_start_ms=cfg.function.cold_start_ms,
        keep_alive_ms=cfg.function.keep_alive_ms,
        per_record_ms=cfg.function.per_record_ms)

    if cfg.mode == "serverless":
        runtime = ServerlessRuntime(engine, store, engine.rng_stream("process"), offset)
        runtime.register_function(spec, "trajectory",
                                  plan_shards(fleet.vehicle_ids, cfg.function.capacity))
    else:
        runtime = ServerBasedRuntime(engine, store, cfg.worker_count,
                                     engine.rng_stream("process"), offset)
        runtime.register_function(spec, "trajectory")
    runtime.on_invocation_start(fleet.note_invocation_start)
    runtime.on_invocation_end(fleet.note_invocation_end)

    if cfg.emission == "probe":
        samples = fleet.run_probe_protocol(cfg.samples_per_vehicle)
    else:
        _schedule_bucket_rollovers(engine, fleet, cfg.duration_ms)
        samples = fleet.run_free_running(cfg.emission_hz, cfg.duration_ms)

    report = build_report(samples, cfg.qos_limit_ms,
                          cfg.per_vehicle_breakdown) if samples else None

    utilization = None
    if cfg.mode == "server_based":
        horizon = cfg.duration_ms if cfg.duration_ms else max(engine.now, 1)
        utilization = runtime.utilization(horizon)

    counters = dict(fleet.counters)
    counters["in_flight_at_end"] = fleet.in_flight()
    counters["invocations"] = len(runtime.invocations)
    counters["events_processed"] = engine.processed
    return RunResult(cfg, samples, runtime.invocations, report, counters,
                     engine, store, fleet, utilization)


def _schedule_bucket_rollovers(engine: Engine, fleet: Fleet, duration_ms: int) -> None:
    def rollover():
        fleet.counters["bucket_rollovers"] = fleet.counters.get("bucket_rollovers", 0) + 1

    for t in range(BUCKET_MS, duration_ms + 1, BUCKET_MS):
        engine.schedule(t, "bucket-rollover", rollover, note=f"bucket@{t}")


@dataclass
class SweepCell:
    n_vehicles: int
    capacity: int
    shard_count: int | None
    p95_wait_ms: int | None
    p95_total_ms: int | None
    verdict: str
    result: RunResult | None = None
    error: str | None = None


def sweep(base: ScenarioConfig, n_vehicles_list: list[int],
          capacity_list: list[int]) -> list[SweepCell]:
    """One independent run per (N, C); per-cell failures do not stop the sweep."""
    if not n_vehicles_list or not capacity_list:
        raise ValueError("sweep needs non-empty n_vehicles and capacity lists")
    cells = []
    for n in n_vehicles_list:
        for capacity in capacity_list:
            cfg = replace(base, n_vehicles=n,
                          function=replace(base.function, capacity=capacity))
            try:
                result = run_scenario(cfg)
                report = result.report
                cells.append(SweepCell(
                    n_vehicles=n, capacity=capacity,
                    shard_count=math.ceil(n / capacity),
                    p95_wait_ms=result.p95_wait_ms(),
                    p95_total_ms=(report.metrics["end_to_end"].p95_ms
                                  if report else None),
                    verdict=report.verdict if report else "error",
                    result=result,
                    error=None if report else "no samples collected"))
            except Exception as err:  # per-cell isolation
                cells.append(SweepCell(n_vehicles=n, capacity=capacity,
                                       shard_count=None, p95_wait_ms=None,
                                       p95_total_ms=None, verdict="error",
                                       error=str(err)))
    return cells


def write_sweep_summary(path: str | Path, cells: list[SweepCell]) -> None:
    lines = ["n_vehicles,capacity,shard_count,p95_wait_ms,p95_total_ms,verdict"]
    for cell in cells:
        def fmt(x):
            return "" if x is None else x
        lines.append(f"{cell.n_vehicles},{cell.capacity},{fmt(cell.shard_count)},"
                     f"{fmt(cell.p95_wait_ms)},{fmt(cell.p95_total_ms)},{cell.verdict}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
