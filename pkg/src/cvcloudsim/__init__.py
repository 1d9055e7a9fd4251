"""Deterministic discrete-event simulator of a serverless cloud pipeline for
connected-vehicle telemetry: calibrated delay models, an emulated key-value
store with change streams, serverless and server-based execution modes, and a
QoS reporting harness."""

from .config import ScenarioConfig, builtin, from_dict
from .engine import Engine, SimTime, TransactionTrace
from .kvstore import ChangeEvent, KvRecord, KvStore
from .latency import LatencyModel, bucket_of, calibrate
from .metrics import DelaySample, QosReport, build_report, cdf_points, percentile
from .runtime import (FunctionSpec, InvocationRecord, ServerBasedRuntime,
                      ServerlessRuntime, ShardPlan, plan_shards)
from .scenario import RunResult, run_scenario, sweep

__all__ = [
    "ChangeEvent", "DelaySample", "Engine", "FunctionSpec", "InvocationRecord",
    "KvRecord", "KvStore", "LatencyModel", "QosReport", "RunResult",
    "ScenarioConfig", "ServerBasedRuntime", "ServerlessRuntime", "ShardPlan",
    "SimTime", "TransactionTrace", "build_report", "builtin", "bucket_of",
    "calibrate", "cdf_points", "from_dict", "percentile", "plan_shards",
    "run_scenario", "sweep",
]

__version__ = "0.1.0"
