"""Command-line entry point: calibrate, ingest, meterstats, fit, eval, track, predict, report, simulate.

Exit codes: 0 success, 2 unreadable or malformed input, 3 fitting/evaluation failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace

from . import _kernels, modelio
from .calibration import (
    JETSON_NANO_FREQUENCIES,
    LinuxDevice,
    SyntheticDevice,
    Workload,
    default_truth_model,
    plan_campaign,
    run_campaign,
)
from .core import ModelKind, evaluate_by_tag, evaluate_model
from .datasets import read_dataset, write_dataset
from .errors import ParseError, PowerLensError
from .learners import FitConfig, fit
from .manifest import CampaignManifest
from .meterio import join_campaign, read_meter_log, resolve_schema, window_power_stats, write_meter_log
from .tracelog import (
    DEFAULT_POLL_S,
    ONDEMAND_PATTERN,
    ControlFile,
    LinuxTraceBackend,
    ReplayBackend,
    read_trace_log,
    segment_report,
    synthesize_fixture,
    track,
    trace_energy,
    trace_power,
)

log = logging.getLogger("powerlens")

EXIT_OK, EXIT_PARSE, EXIT_FIT = 0, 2, 3


def _fmt(x) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.6g}"


def _write_run_manifest(args, extra=None):
    os.makedirs(args.out_dir, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    resolved["kernel_backend"] = _kernels.BACKEND
    if extra:
        resolved.update(extra)
    path = os.path.join(args.out_dir, f"{args.command}.run.json")
    with open(path, "w") as fh:
        json.dump(resolved, fh, indent=1, default=str)
        fh.write("\n")


def _parse_freqs(text, available):
    if text in (None, "auto"):
        return tuple(available)
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ParseError(f"--freqs must be 'auto' or a comma list of kHz values, got {text!r}") from None


def cmd_calibrate(args):
    schedule_kwargs = dict(runtime_factor=args.runtime_factor, total_time=args.total_time)
    if args.device == "synthetic":
        truth = modelio.load(args.truth) if args.truth else default_truth_model()
        freqs = _parse_freqs(args.freqs, truth.frequency_table)
        device = SyntheticDevice(truth, freqs, core_count=args.cores, noise_stddev_w=args.noise,
                                 meter_sample_period=args.meter_period, rng_seed=args.seed)
    else:
        device = LinuxDevice(allow_writes=args.allow_governor_writes)
        freqs = _parse_freqs(args.freqs, device.supported_frequencies)
    schedule = plan_campaign(freqs, **schedule_kwargs)
    workers = args.workers if args.workers else device.core_count
    workload = Workload("single_thread", 1) if args.workload == "single_thread" else Workload("multi_thread", workers)
    result = run_campaign(device, schedule, workload)
    manifest_path = args.manifest or os.path.splitext(args.out)[0] + ".manifest.json"
    result.manifest.config["seed"] = args.seed
    result.manifest.save(manifest_path)
    if args.device == "synthetic":
        meter_path = args.meter_log or os.path.splitext(args.out)[0] + ".meter.csv"
        write_meter_log(meter_path, device.meter_log)
    if result.records:
        write_dataset(args.out, result.records)
        print(f"wrote {len(result.records)} records to {args.out}")
    else:
        print(f"no energy readings; join {manifest_path} against the meter log with 'powerlens ingest'")
    for freq, factor, reason in result.skipped:
        print(f"skipped {freq} kHz factor {factor}: {reason}", file=sys.stderr)
    _write_run_manifest(args, {"manifest": manifest_path, "cells": len(result.manifest.cells)})
    return EXIT_OK


def cmd_ingest(args):
    samples = read_meter_log(args.log, resolve_schema(args.schema))
    manifest = CampaignManifest.load(args.manifest)
    result = join_campaign(manifest, samples)
    write_dataset(args.out, result.records)
    for cell in result.uncovered:
        print(f"uncovered cell: {cell.freq_khz} kHz factor {cell.factor} [{cell.t_start}, {cell.t_end}]",
              file=sys.stderr)
    print(f"wrote {len(result.records)} records to {args.out} ({len(result.uncovered)} uncovered)")
    _write_run_manifest(args)
    return EXIT_OK


def cmd_meterstats(args):
    samples = read_meter_log(args.log, resolve_schema(args.schema))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["window_s", "window_start_s", "power_w"])
        summary = []
        for window in args.window:
            stats = window_power_stats(samples, window, args.stride or window)
            for start, p in zip(stats.starts, stats.powers):
                w.writerow([_fmt(window), repr(float(start)), repr(float(p))])
            summary.append((window, stats))
    finally:
        if args.out:
            out.close()
    for window, stats in summary:
        print(f"window={_fmt(window)}s n={stats.n} mean_w={_fmt(stats.mean)} stddev_w={_fmt(stats.stddev)}",
              file=sys.stderr if not args.out else sys.stdout)
    _write_run_manifest(args)
    return EXIT_OK


def _load_dataset(path):
    records = read_dataset(path)
    if not records:
        raise ParseError("dataset has no data rows", 2, path)
    return records


def cmd_fit(args):
    records = _load_dataset(args.dataset)
    config = FitConfig.from_json(args.config) if args.config else FitConfig()
    if args.split_index is not None:
        config = replace(config, split_index=args.split_index)
    model = fit(args.kind, records, config)
    modelio.save(model, args.out)
    metrics = evaluate_model(model, records, allow_degenerate=True)
    print(f"kind={model.kind.value} mse={_fmt(metrics.mse)} mae={_fmt(metrics.mae)} "
          f"r2={_fmt(metrics.r2)} n={metrics.n}")
    _write_run_manifest(args, {"fit_config": config.to_dict()})
    return EXIT_OK


def cmd_eval(args):
    model = modelio.load(args.model)
    records = _load_dataset(args.dataset)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["group", "n", "mse", "mae", "r2"])
    if args.group_by_tag:
        for tag, m in evaluate_by_tag(model, records).items():
            w.writerow([tag or "(untagged)", m.n, _fmt(m.mse), _fmt(m.mae), _fmt(m.r2)])
    m = evaluate_model(model, records, allow_degenerate=True)
    w.writerow(["aggregate", m.n, _fmt(m.mse), _fmt(m.mae), _fmt(m.r2)])
    _write_run_manifest(args)
    return EXIT_OK


def cmd_track(args):
    if args.backend[0] == "replay":
        if len(args.backend) != 2:
            raise ParseError("--backend replay needs a fixture path")
        backend = ReplayBackend.from_file(args.backend[1])
    elif args.backend == ["linux"]:
        backend = LinuxTraceBackend()
    else:
        raise ParseError(f"unknown backend {' '.join(args.backend)!r}")
    control = ControlFile(args.control) if args.control else None
    try:
        segments = track(backend, out=args.out, poll_s=args.poll_ms / 1000.0, control=control,
                         max_duration=args.duration)
    except KeyboardInterrupt:
        segments = None
    if segments is not None:
        print(f"logged {len(segments)} segments to {args.out}")
    _write_run_manifest(args)
    return EXIT_OK


def _report_rows(model, segments):
    return segment_report(model, segments)


def cmd_predict(args):
    model = modelio.load(args.model)
    segments = read_trace_log(args.trace)
    power = trace_power(model, segments)
    print(f"power_w={power!r}")
    if args.energy:
        print(f"energy_j={trace_energy(model, segments)!r}")
    if args.breakdown:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["t_start", "freq_khz", "duration_s", "util", "power_w", "energy_j"])
        for r in _report_rows(model, segments):
            w.writerow([repr(r.t_start), r.freq_khz, repr(r.duration_s), repr(r.util), repr(r.power_w), repr(r.energy_j)])
    _write_run_manifest(args)
    return EXIT_OK


def cmd_report(args):
    model = modelio.load(args.model)
    segments = read_trace_log(args.trace)
    rows = _report_rows(model, segments)
    power = trace_power(model, segments)
    energy = trace_energy(model, segments)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t_start", "freq_khz", "duration_s", "util", "power_w", "energy_j"])
        for r in rows:
            w.writerow([repr(r.t_start), r.freq_khz, repr(r.duration_s), repr(r.util), repr(r.power_w), repr(r.energy_j)])
    finally:
        if args.out:
            out.close()
    summary = sys.stdout if args.out else sys.stderr
    print(f"segments={len(rows)} total_power_w={power!r} total_energy_j={energy!r}", file=summary)
    _write_run_manifest(args)
    return EXIT_OK


def cmd_simulate(args):
    """Synthetic end-to-end run: campaign, meter log, dataset, tracker fixture and trace."""
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    if args.freqs == "auto":
        freqs = JETSON_NANO_FREQUENCIES
    else:
        freqs = _parse_freqs(args.freqs, JETSON_NANO_FREQUENCIES)
    truth = default_truth_model(freqs)
    modelio.save(truth, os.path.join(out, "truth.model"))
    device = SyntheticDevice(truth, freqs, core_count=args.cores, noise_stddev_w=args.noise,
                             meter_sample_period=args.meter_period, rng_seed=args.seed)
    schedule = plan_campaign(freqs, runtime_factor=args.total_time / 10, total_time=args.total_time)
    result = run_campaign(device, schedule, Workload("multi_thread", args.cores))
    result.manifest.config["seed"] = args.seed
    result.manifest.save(os.path.join(out, "campaign.manifest.json"))
    write_meter_log(os.path.join(out, "meter.csv"), device.meter_log)
    write_dataset(os.path.join(out, "dataset.csv"), result.records)
    fixture = os.path.join(out, "replay.csv")
    with open(fixture, "w") as fh:
        fh.write(synthesize_fixture(ONDEMAND_PATTERN))
    trace_path = os.path.join(out, "trace.log")
    if os.path.exists(trace_path):
        os.remove(trace_path)
    segments = track(ReplayBackend.from_file(fixture), out=trace_path)
    print(f"campaign cells={len(result.manifest.cells)} records={len(result.records)} "
          f"trace segments={len(segments)} -> {out}")
    _write_run_manifest(args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="store_true")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=".", help="where run manifests (and simulate outputs) go")

    p = argparse.ArgumentParser(prog="powerlens", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", parents=[common], help="run a calibration campaign")
    c.add_argument("--device", choices=["synthetic", "linux"], default="synthetic")
    c.add_argument("--freqs", default="auto", help="'auto' or comma-separated kHz list")
    c.add_argument("--total-time", type=float, default=180.0)
    c.add_argument("--runtime-factor", type=float, default=18.0)
    c.add_argument("--workers", type=int, default=None, help="CPU-bound workers (default: one per core)")
    c.add_argument("--workload", choices=["single_thread", "multi_thread"], default="multi_thread")
    c.add_argument("--out", required=True, help="training dataset CSV")
    c.add_argument("--manifest", help="campaign manifest path (default: next to --out)")
    c.add_argument("--noise", type=float, default=0.05, help="synthetic meter noise stddev, W")
    c.add_argument("--meter-period", type=float, default=1.0)
    c.add_argument("--meter-log", help="synthetic meter log path (default: next to --out)")
    c.add_argument("--cores", type=int, default=4)
    c.add_argument("--truth", help="ground-truth model file for the synthetic device")
    c.add_argument("--allow-governor-writes", action="store_true",
                   help="permit writing cpufreq governor files (linux device, needs root)")
    c.set_defaults(func=cmd_calibrate)

    c = sub.add_parser("ingest", parents=[common], help="join a meter log with a campaign manifest")
    c.add_argument("--schema", default="energy", help="builtin schema name or JSON descriptor path")
    c.add_argument("--log", required=True)
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_ingest)

    c = sub.add_parser("meterstats", parents=[common], help="per-window average power of a meter log")
    c.add_argument("--schema", default="energy")
    c.add_argument("--log", required=True)
    c.add_argument("--window", type=float, nargs="+", required=True)
    c.add_argument("--stride", type=float, default=None, help="default: the window length")
    c.add_argument("--out")
    c.set_defaults(func=cmd_meterstats)

    c = sub.add_parser("fit", parents=[common], help="fit a model to a dataset")
    c.add_argument("--dataset", required=True)
    c.add_argument("--kind", required=True, choices=[k.value for k in ModelKind])
    c.add_argument("--config", help="JSON fit configuration")
    c.add_argument("--split-index", type=int)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_fit)

    c = sub.add_parser("eval", parents=[common], help="MSE/MAE/R^2 of a model on a dataset")
    c.add_argument("--model", required=True)
    c.add_argument("--dataset", required=True)
    c.add_argument("--group-by-tag", action="store_true")
    c.set_defaults(func=cmd_eval)

    c = sub.add_parser("track", parents=[common], help="log frequency segments")
    c.add_argument("--backend", nargs="+", default=["linux"], metavar="BACKEND",
                   help="'linux' or 'replay FIXTURE'")
    c.add_argument("--poll-ms", type=float, default=DEFAULT_POLL_S * 1000)
    c.add_argument("--out", required=True)
    c.add_argument("--control", help="file holding '1' (log) or '0' (stop)")
    c.add_argument("--duration", type=float, default=None, help="stop after this many seconds")
    c.set_defaults(func=cmd_track)

    c = sub.add_parser("predict", parents=[common], help="predicted power of a trace")
    c.add_argument("--model", required=True)
    c.add_argument("--trace", required=True)
    c.add_argument("--energy", action="store_true")
    c.add_argument("--breakdown", action="store_true", help="per-segment CSV")
    c.set_defaults(func=cmd_predict)

    c = sub.add_parser("report", parents=[common], help="per-segment power/energy CSV and totals")
    c.add_argument("--trace", required=True)
    c.add_argument("--model", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_report)

    c = sub.add_parser("simulate", parents=[common], help="synthetic device end to end")
    c.add_argument("--freqs", default="auto")
    c.add_argument("--noise", type=float, default=0.05)
    c.add_argument("--meter-period", type=float, default=1.0)
    c.add_argument("--total-time", type=float, default=180.0)
    c.add_argument("--cores", type=int, default=4)
    c.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except PowerLensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
