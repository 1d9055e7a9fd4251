"""Scenario configuration: defaults, presets, strict JSON round-trip.

Config files are JSON documents; unknown keys are rejected at every level so a
typo in an experiment definition fails loudly instead of silently falling back
to a default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .latency import DIURNAL_PROFILES, CalibrationError, calibrate
from .runtime import MAX_FUNCTION_MEMORY_MB

MODES = ("serverless", "server_based")
EMISSIONS = ("probe", "free_running")
DIRECTIONS = ("upload", "download", "process")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LatencyTargets:
    mean_ms: float
    p95_ms: float


@dataclass(frozen=True)
class FunctionConfig:
    capacity: int = 50
    memory_mb: int = 1024
    cold_start_ms: int = 0
    keep_alive_ms: int = 300_000
    per_record_ms: int = 0


def _default_targets() -> dict[str, LatencyTargets]:
    return {"upload": LatencyTargets(85, 136),
            "download": LatencyTargets(84, 139),
            "process": LatencyTargets(41, 74)}


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 1
    mode: str = "serverless"
    n_vehicles: int = 3
    samples_per_vehicle: int | None = 1000
    duration_ms: int | None = None
    emission: str = "probe"
    emission_hz: float = 10.0
    road_length_m: float = 5000.0
    n_segments: int = 10
    speed_limit_mph: float = 35.0
    speed_walk_mps: float = 0.4
    start_hour: float = 0.0
    targets: dict[str, LatencyTargets] = field(default_factory=_default_targets)
    diurnal: str | dict = "flat"
    function: FunctionConfig = field(default_factory=FunctionConfig)
    worker_count: int = 4
    qos_limit_ms: int = 1000
    window_ms: int = 10_000
    per_vehicle_breakdown: bool = False
    output_dir: str | None = None

    @property
    def start_offset_ms(self) -> int:
        return int(round(self.start_hour * 3_600_000))

    def diurnal_multipliers(self) -> dict[str, tuple[float, ...]]:
        if isinstance(self.diurnal, str):
            return DIURNAL_PROFILES[self.diurnal]
        return {d: tuple(self.diurnal[d]) for d in DIRECTIONS}

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.emission not in EMISSIONS:
            raise ConfigError(f"emission must be one of {EMISSIONS}, got {self.emission!r}")
        if self.n_vehicles < 0:
            raise ConfigError("n_vehicles must be >= 0")
        if self.emission == "probe":
            if self.samples_per_vehicle is None or self.samples_per_vehicle < 1:
                raise ConfigError("probe emission needs samples_per_vehicle >= 1")
        else:
            if self.duration_ms is None or self.duration_ms < 1:
                raise ConfigError("free_running emission needs duration_ms >= 1")
            if self.emission_hz <= 0:
                raise ConfigError("emission_hz must be > 0")
        if self.road_length_m <= 0:
            raise ConfigError("road_length_m must be > 0")
        if self.n_segments < 1:
            raise ConfigError("n_segments must be >= 1")
        if self.speed_limit_mph <= 0:
            raise ConfigError("speed_limit_mph must be > 0")
        if self.speed_walk_mps < 0:
            raise ConfigError("speed_walk_mps must be >= 0")
        if self.qos_limit_ms <= 0:
            raise ConfigError("qos_limit_ms must be > 0")
        if self.window_ms <= 0:
            raise ConfigError("window_ms must be > 0")
        if self.worker_count < 1:
            raise ConfigError("worker_count must be >= 1")
        fn = self.function
        if not 0 < fn.memory_mb <= MAX_FUNCTION_MEMORY_MB:
            raise ConfigError(
                f"function.memory_mb must be in (0, {MAX_FUNCTION_MEMORY_MB}], got {fn.memory_mb}")
        if fn.capacity < 1:
            raise ConfigError("function.capacity must be >= 1")
        if min(fn.cold_start_ms, fn.keep_alive_ms, fn.per_record_ms) < 0:
            raise ConfigError("function timing fields must be >= 0")
        for direction in DIRECTIONS:
            if direction not in self.targets:
                raise ConfigError(f"targets.{direction} is missing")
            t = self.targets[direction]
            try:
                calibrate(t.mean_ms, t.p95_ms)
            except CalibrationError as err:
                raise ConfigError(
                    f"targets.{direction} ({t.mean_ms}, {t.p95_ms}) is infeasible: {err}"
                ) from err
        if isinstance(self.diurnal, str):
            if self.diurnal not in DIURNAL_PROFILES:
                raise ConfigError(
                    f"unknown diurnal profile {self.diurnal!r}; "
                    f"known: {sorted(DIURNAL_PROFILES)}")
        else:
            _check_keys(self.diurnal, set(DIRECTIONS), "diurnal")
            for direction in DIRECTIONS:
                values = self.diurnal.get(direction)
                if (not isinstance(values, (list, tuple)) or len(values) != 8
                        or any(not isinstance(v, (int, float)) or v <= 0 for v in values)):
                    raise ConfigError(
                        f"diurnal.{direction} must be 8 positive multipliers")


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _targets_from(data: dict) -> dict[str, LatencyTargets]:
    _check_keys(data, set(DIRECTIONS), "targets")
    out = dict(_default_targets())
    for direction, spec in data.items():
        if not isinstance(spec, dict):
            raise ConfigError(f"targets.{direction} must be an object")
        _check_keys(spec, {"mean_ms", "p95_ms"}, f"targets.{direction}")
        if "mean_ms" not in spec or "p95_ms" not in spec:
            raise ConfigError(f"targets.{direction} needs mean_ms and p95_ms")
        out[direction] = LatencyTargets(spec["mean_ms"], spec["p95_ms"])
    return out


_TOP_KEYS = {f for f in ScenarioConfig.__dataclass_fields__}
_FUNCTION_KEYS = {f for f in FunctionConfig.__dataclass_fields__}


def from_dict(data: dict) -> ScenarioConfig:
    """Build a validated config from a JSON-shaped dict; unknown keys fail."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(data, _TOP_KEYS, "config")
    kwargs = dict(data)
    if "targets" in kwargs:
        kwargs["targets"] = _targets_from(kwargs["targets"])
    if "function" in kwargs:
        fn = kwargs["function"]
        if not isinstance(fn, dict):
            raise ConfigError("function must be an object")
        _check_keys(fn, _FUNCTION_KEYS, "function")
        kwargs["function"] = FunctionConfig(**fn)
    cfg = ScenarioConfig(**kwargs)
    cfg.validate()
    return cfg


def to_dict(cfg: ScenarioConfig) -> dict:
    doc = asdict(cfg)
    doc["targets"] = {d: {"mean_ms": t.mean_ms, "p95_ms": t.p95_ms}
                      for d, t in cfg.targets.items()}
    return doc


def merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def load_file(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON in {path}: {err}") from err


def write_echo(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


# Builtin presets, expressed as overrides on the defaults.
BUILTIN_SCENARIOS: dict[str, dict] = {
    "table1-replication": {
        "function": {"capacity": 1},
    },
    "diurnal-24h": {
        "emission": "free_running",
        "emission_hz": 0.05,
        "duration_ms": 86_400_000,
        "samples_per_vehicle": None,
        "diurnal": "daily-peaks",
        "function": {"capacity": 1},
    },
    "scaling-sweep": {
        "emission": "free_running",
        "emission_hz": 10.0,
        "duration_ms": 4_000,
        "samples_per_vehicle": None,
        "n_vehicles": 1000,
        "window_ms": 500,
        "function": {"capacity": 100, "per_record_ms": 2},
    },
    "server-baseline": {
        "mode": "server_based",
        "worker_count": 4,
    },
}

SCENARIO_BLURBS = {
    "table1-replication": "3 vehicles x 1000 serialized probes, flat diurnal; "
                          "reproduces the calibrated delay table",
    "diurnal-24h": "24 h free-running emission through the daily-peaks profile",
    "scaling-sweep": "free-running 10 Hz base cell for capacity sweeps "
                     "(1000 vehicles, capacity 100)",
    "server-baseline": "probe workload executed on the fixed worker pool",
}


def builtin(name: str, seed: int | None = None) -> ScenarioConfig:
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; known: {sorted(BUILTIN_SCENARIOS)}")
    cfg = from_dict(merge({}, BUILTIN_SCENARIOS[name]))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg
