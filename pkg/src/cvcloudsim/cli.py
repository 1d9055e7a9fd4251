"""Command-line entry point.

Subcommands: `run` executes one scenario and writes the report artifacts
(JSON + CSV + figures), `sweep` runs a vehicles x capacity matrix, `calibrate`
prints fitted log-normal parameters for a (mean, p95) pair, and `scenarios`
lists the builtin presets. Exit status: 0 on a passing run, 1 on a failing
QoS verdict (or failed sweep cells), 2 on configuration/usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cfgmod
from . import figures
from .config import ConfigError, ScenarioConfig
from .fleet import write_fleet_trace_csv
from .latency import CalibrationError, calibrate
from .metrics import write_cdf_csv, write_report_json, write_samples_csv
from .runtime import write_invocations_csv
from .scenario import RunResult, run_scenario, sweep, write_sweep_summary

CDF_FIELDS = {"upload": "upload_ms", "download": "download_ms",
              "process": "process_ms", "total": "total_ms"}


def _int_list(text: str) -> list[int]:
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers")
    try:
        return [int(part) for part in items]
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvcloudsim",
        description="Discrete-event simulator of a serverless connected-vehicle pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and write artifacts")
    _add_config_args(run_p)
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--no-figures", action="store_true",
                       help="skip PNG figure rendering")
    run_p.add_argument("--trace", action="store_true",
                       help="export the processed-event log (events.tsv)")
    run_p.add_argument("--dump-kv", action="store_true",
                       help="export JSON dumps of both tables")

    sweep_p = sub.add_parser("sweep", help="run a vehicles x capacity matrix")
    _add_config_args(sweep_p)
    sweep_p.add_argument("--out", required=True, help="output directory")
    sweep_p.add_argument("--vehicles", required=True, type=_int_list,
                         help="comma-separated fleet sizes, e.g. 10,100,1000")
    sweep_p.add_argument("--capacities", required=True, type=_int_list,
                         help="comma-separated per-function capacities")
    sweep_p.add_argument("--no-figures", action="store_true")

    cal_p = sub.add_parser("calibrate",
                           help="fit log-normal (mu, sigma) for mean/p95 targets")
    cal_p.add_argument("--mean", required=True, type=float)
    cal_p.add_argument("--p95", required=True, type=float)

    sub.add_parser("scenarios", help="list builtin scenario presets")
    return parser


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="builtin scenario preset name")
    p.add_argument("--config", help="JSON config file (overrides the preset)")
    p.add_argument("--seed", type=int, help="master seed override")


def resolve_config(args, default_scenario: str | None = None) -> ScenarioConfig:
    merged: dict = {}
    scenario = args.scenario or default_scenario
    if scenario:
        if scenario not in cfgmod.BUILTIN_SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}; "
                              f"known: {sorted(cfgmod.BUILTIN_SCENARIOS)}")
        merged = cfgmod.merge(merged, cfgmod.BUILTIN_SCENARIOS[scenario])
    if args.config:
        merged = cfgmod.merge(merged, cfgmod.load_file(args.config))
    if args.seed is not None:
        merged["seed"] = args.seed
    if getattr(args, "out", None):
        merged["output_dir"] = str(args.out)
    return cfgmod.from_dict(merged)


def write_run_artifacts(outdir: Path, result: RunResult, render_figures: bool = True,
                        dump_kv: bool = False, trace: bool = False) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    cfgmod.write_echo(result.config, outdir / "config.echo.json")
    doc = result.report_dict()
    write_report_json(outdir / "report.json", doc)
    write_samples_csv(outdir / "samples.csv", result.samples)
    write_invocations_csv(outdir / "invocations.csv", result.invocations)
    for name, attr in CDF_FIELDS.items():
        write_cdf_csv(outdir / f"cdf_{name}.csv",
                      [getattr(s, attr) for s in result.samples])
    write_fleet_trace_csv(outdir / "fleet_trace.csv", result.fleet.trace_rows)
    if render_figures:
        figures.render_run_figures(outdir, result.samples, doc)
    if dump_kv:
        result.store.write_dump("trajectory", outdir / "kv_trajectory.json")
        result.store.write_dump("feedback", outdir / "kv_feedback.json")
    if trace:
        result.engine.write_trace(outdir / "events.tsv")


def _print_summary(result: RunResult) -> None:
    report = result.report
    e2e = report.metrics["end_to_end"]
    relation = "<" if report.passed else ">="
    print(f"verdict {report.verdict.upper()} "
          f"(p95 end-to-end {round(e2e.p95_ms)} ms {relation} limit {report.limit_ms} ms)")
    print(f"{'metric':<12}{'n':>8}{'mean_ms':>10}{'p95_ms':>8}")
    for name in ("upload", "download", "process", "wait", "end_to_end"):
        row = report.metrics[name]
        print(f"{name:<12}{row.n:>8}{round(row.mean_ms):>10}{round(row.p95_ms):>8}")
    print(f"sum_of_p95_ms (upload+process+download): {round(report.sum_of_p95_ms)}")


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    result = run_scenario(cfg, keep_trace=args.trace)
    if not result.samples:
        print("error: run produced no delay samples (check fleet/emission settings)",
              file=sys.stderr)
        return 2
    outdir = Path(args.out)
    write_run_artifacts(outdir, result, render_figures=not args.no_figures,
                        dump_kv=args.dump_kv, trace=args.trace)
    _print_summary(result)
    print(f"artifacts written to {outdir}")
    return 0 if result.passed else 1


def cmd_sweep(args) -> int:
    base = resolve_config(args, default_scenario="scaling-sweep")
    cells = sweep(base, args.vehicles, args.capacities)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for cell in cells:
        if cell.result is not None and cell.result.samples:
            write_run_artifacts(outdir / f"n{cell.n_vehicles}_c{cell.capacity}",
                                cell.result, render_figures=not args.no_figures)
    write_sweep_summary(outdir / "sweep_summary.csv", cells)
    failed = [c for c in cells if c.error is not None]
    print(f"{'n_vehicles':>10}{'capacity':>10}{'shards':>8}{'p95_wait':>10}"
          f"{'p95_total':>10}  verdict")
    for cell in cells:
        print(f"{cell.n_vehicles:>10}{cell.capacity:>10}"
              f"{cell.shard_count if cell.shard_count is not None else '-':>8}"
              f"{cell.p95_wait_ms if cell.p95_wait_ms is not None else '-':>10}"
              f"{cell.p95_total_ms if cell.p95_total_ms is not None else '-':>10}"
              f"  {cell.verdict}")
    print(f"summary written to {outdir / 'sweep_summary.csv'}")
    for cell in failed:
        print(f"cell n={cell.n_vehicles} c={cell.capacity} failed: {cell.error}",
              file=sys.stderr)
    return 1 if failed else 0


def cmd_calibrate(args) -> int:
    mu, sigma = calibrate(args.mean, args.p95)
    print(f"mu={mu:.9f} sigma={sigma:.9f}")
    return 0


def cmd_scenarios(_args) -> int:
    for name in sorted(cfgmod.BUILTIN_SCENARIOS):
        print(f"{name:<20} {cfgmod.SCENARIO_BLURBS[name]}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "sweep": cmd_sweep,
                "calibrate": cmd_calibrate, "scenarios": cmd_scenarios}
    try:
        return handlers[args.command](args)
    except (ConfigError, CalibrationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
