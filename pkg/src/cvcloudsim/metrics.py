"""Delay statistics and report artifacts.

Collects per-transaction delay decompositions, computes means and
nearest-rank percentiles, empirical CDFs, per-bucket diurnal summaries, and
the QoS verdict against the configured end-to-end limit. Exports are plain
CSV/JSON; figure rendering is a separate concern of the CLI layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .engine import SimTime

COMPONENTS = ("upload_ms", "wait_ms", "process_ms", "download_ms")


@dataclass(frozen=True)
class DelaySample:
    """One completed round trip split into its delay components."""

    txn_id: str
    vehicle_id: str
    t_emit: SimTime
    upload_ms: int
    wait_ms: int
    process_ms: int
    download_ms: int
    total_ms: int
    day_bucket: int


@dataclass(frozen=True)
class MetricSummary:
    n: int
    mean_ms: float
    p95_ms: float


@dataclass(frozen=True)
class QosReport:
    metrics: dict[str, MetricSummary]
    sum_of_p95_ms: float
    limit_ms: int
    verdict: str  # "pass" | "fail"
    per_vehicle: dict[str, dict[str, MetricSummary]] | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not samples:
        raise ValueError("percentile of an empty sample set")
    if not 0 < p <= 100:
        raise ValueError(f"p must be in (0, 100], got {p}")
    ordered = sorted(samples)
    rank = math.ceil(p / 100 * len(ordered))
    return ordered[rank - 1]


def _summaries(samples: Sequence[DelaySample]) -> dict[str, MetricSummary]:
    out = {}
    for label, attr in (("upload", "upload_ms"), ("download", "download_ms"),
                        ("process", "process_ms"), ("wait", "wait_ms"),
                        ("end_to_end", "total_ms")):
        values = [getattr(s, attr) for s in samples]
        out[label] = MetricSummary(len(values), sum(values) / len(values),
                                   percentile(values, 95))
    return out


def build_report(samples: Sequence[DelaySample], limit_ms: int,
                 per_vehicle: bool = False) -> QosReport:
    """Per-component mean/p95 plus the component-sum p95 and the QoS verdict.

    sum_of_p95_ms adds the upload, process, and download p95s; the
    end_to_end row carries the true per-transaction p95, which gates the
    verdict (strictly below limit_ms passes).
    """
    if not samples:
        raise ValueError("cannot build a report from zero samples")
    metrics = _summaries(samples)
    sum_of_p95 = (metrics["upload"].p95_ms + metrics["process"].p95_ms
                  + metrics["download"].p95_ms)
    verdict = "pass" if metrics["end_to_end"].p95_ms < limit_ms else "fail"
    breakdown = None
    if per_vehicle:
        by_vehicle: dict[str, list[DelaySample]] = {}
        for sample in samples:
            by_vehicle.setdefault(sample.vehicle_id, []).append(sample)
        breakdown = {vid: _summaries(group)
                     for vid, group in sorted(by_vehicle.items())}
    return QosReport(metrics, sum_of_p95, limit_ms, verdict, breakdown)


def cdf_points(samples: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF as (unique value, cumulative fraction); ends at 1.0."""
    if not samples:
        raise ValueError("cdf of an empty sample set")
    ordered = sorted(samples)
    n = len(ordered)
    points = []
    for i, value in enumerate(ordered):
        if i == n - 1 or ordered[i + 1] != value:
            points.append((value, (i + 1) / n))
    return points


def diurnal_summary(tagged: Iterable[tuple[int, float]]) -> list[dict]:
    """Eight rows of (n, mean, p95), one per 3-hour bucket; empty buckets have n=0."""
    buckets: dict[int, list[float]] = {b: [] for b in range(8)}
    for bucket, value in tagged:
        buckets[bucket].append(value)
    rows = []
    for b in range(8):
        values = buckets[b]
        if values:
            rows.append({"bucket": b, "n": len(values),
                         "mean_ms": round(sum(values) / len(values), 3),
                         "p95_ms": percentile(values, 95)})
        else:
            rows.append({"bucket": b, "n": 0, "mean_ms": None, "p95_ms": None})
    return rows


def _summary_dict(summary: MetricSummary) -> dict:
    return {"n": summary.n, "mean_ms": round(summary.mean_ms, 3),
            "p95_ms": summary.p95_ms}


def report_to_dict(report: QosReport, samples: Sequence[DelaySample] | None = None,
                   extras: dict | None = None) -> dict:
    doc = {
        "limit_ms": report.limit_ms,
        "verdict": report.verdict,
        "metrics": {name: _summary_dict(s) for name, s in report.metrics.items()},
        "sum_of_p95_ms": report.sum_of_p95_ms,
        "sum_of_p95_basis": ("p95(upload) + p95(process) + p95(download); "
                             "metrics.end_to_end.p95_ms is the per-transaction p95"),
    }
    if report.per_vehicle is not None:
        doc["per_vehicle"] = {
            vid: {name: _summary_dict(s) for name, s in rows.items()}
            for vid, rows in report.per_vehicle.items()}
    if samples:
        doc["diurnal"] = {
            "upload_ms": diurnal_summary((s.day_bucket, s.upload_ms) for s in samples),
            "download_ms": diurnal_summary((s.day_bucket, s.download_ms) for s in samples),
        }
    if extras:
        doc.update(extras)
    return doc


def write_report_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def write_samples_csv(path: str | Path, samples: Sequence[DelaySample]) -> None:
    lines = ["txn_id,vehicle_id,t_emit,upload_ms,wait_ms,process_ms,"
             "download_ms,total_ms,day_bucket"]
    for s in samples:
        lines.append(f"{s.txn_id},{s.vehicle_id},{s.t_emit},{s.upload_ms},"
                     f"{s.wait_ms},{s.process_ms},{s.download_ms},{s.total_ms},"
                     f"{s.day_bucket}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_cdf_csv(path: str | Path, values: Sequence[float]) -> None:
    lines = ["value_ms,cum_fraction"]
    for value, fraction in cdf_points(values):
        lines.append(f"{value},{fraction:.9f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
