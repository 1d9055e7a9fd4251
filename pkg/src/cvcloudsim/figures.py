"""Matplotlib renderings of the report artifacts.

Written by the CLI next to the delimited exports; the simulator and metrics
modules never import this. All output is file-based (Agg backend).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import DelaySample, cdf_points  # noqa: E402


def _cdf_axes(ax, series: dict[str, Sequence[int]]) -> None:
    for label, values in series.items():
        points = cdf_points(values)
        xs = [v for v, _ in points]
        ys = [f for _, f in points]
        ax.step(xs, ys, where="post", label=label)
    ax.set_ylim(0.0, 1.02)
    ax.set_ylabel("cumulative fraction")
    ax.grid(True, alpha=0.3)
    ax.legend()


def save_delay_cdf(path: Path, upload: Sequence[int], download: Sequence[int]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    _cdf_axes(ax, {"upload": upload, "download": download})
    ax.set_xlabel("communication delay (ms)")
    ax.set_title("Upload and download delay CDF")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_process_cdf(path: Path, process: Sequence[int]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    _cdf_axes(ax, {"process": process})
    ax.set_xlabel("processing time (ms)")
    ax.set_title("Function processing time CDF")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_diurnal_bars(path: Path, diurnal: dict[str, list[dict]]) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.38
    labels = [f"{3 * b:02d}-{3 * b + 3:02d}" for b in range(8)]
    for offset, (name, rows) in enumerate(sorted(diurnal.items())):
        xs = [row["bucket"] + (offset - 0.5) * width for row in rows]
        ys = [row["p95_ms"] if row["n"] else 0 for row in rows]
        ax.bar(xs, ys, width=width, label=name.replace("_ms", ""))
    ax.set_xticks(range(8), labels, rotation=45)
    ax.set_xlabel("time of day (3-hour buckets)")
    ax.set_ylabel("p95 delay (ms)")
    ax.set_title("Diurnal p95 delay by bucket")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_run_figures(outdir: Path, samples: Sequence[DelaySample],
                       report_doc: dict) -> list[Path]:
    """Render the standard figure set into outdir/figures; returns paths."""
    figdir = outdir / "figures"
    figdir.mkdir(parents=True, exist_ok=True)
    written = []

    path = figdir / "cdf_delays.png"
    save_delay_cdf(path, [s.upload_ms for s in samples],
                   [s.download_ms for s in samples])
    written.append(path)

    path = figdir / "cdf_process.png"
    save_process_cdf(path, [s.process_ms for s in samples])
    written.append(path)

    diurnal = report_doc.get("diurnal", {})
    populated = {row["bucket"] for rows in diurnal.values() for row in rows if row["n"]}
    if len(populated) >= 2:
        path = figdir / "diurnal_p95.png"
        save_diurnal_bars(path, diurnal)
        written.append(path)
    return written
