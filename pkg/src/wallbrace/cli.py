"""Command-line experiment runner.

Subcommands:
    track     stepped-command tracking test for both controller variants
    sweep     full push-recovery sweep over the configured grid
    scenario  one scripted scenario with a full state-trace dump
    stats     recompute safeset statistics from an existing results.csv
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import harness
from .config import load_config
from .harness import (ScenarioResult, compute_safeset_stats, run_push_sweep,
                      run_tracking, simulate, write_sweep_outputs,
                      write_tracking_csv)
from .plant import FailureCode


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--variant", choices=("hlip", "mpc", "both"),
                   default="both", help="controller variant(s)")


def _variants(args):
    return ("hlip", "mpc") if args.variant == "both" else (args.variant,)


def cmd_track(args):
    cfg = load_config(args.config)
    reports = run_tracking(cfg.stack, speed=cfg.tracking_speed,
                           duration=cfg.tracking_duration,
                           variants=_variants(args), axis=args.axis)
    paths = write_tracking_csv(reports, args.out, axis=args.axis)
    for variant, rep in reports.items():
        print(f"{variant}: commanded {rep['commanded']:.2f}, achieved "
              f"{rep['achieved_mean_last2s']:.4f} (mean over final 2 s), "
              f"roll-rate envelope {rep['roll_rate_envelope']:.4f} rad/s, "
              f"failure={rep['failure']}")
    print("wrote:", *paths, sep="\n  ")
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config)
    variants = _variants(args)
    total = len(cfg.grid) * len(variants)
    t0 = time.perf_counter()

    def progress(done, total_, res):
        if done % 50 == 0 or done == total_:
            el = time.perf_counter() - t0
            sys.stderr.write(f"\r{done}/{total_} scenarios "
                             f"({el:.0f}s elapsed, {el / done:.2f}s/cell)")
            sys.stderr.flush()

    results = run_push_sweep(cfg.grid, cfg.stack, variants=variants,
                             parallel=args.parallel,
                             progress=progress if not args.quiet else None)
    if not args.quiet:
        sys.stderr.write("\n")
    stats = compute_safeset_stats(results)
    csv_path, json_path = write_sweep_outputs(results, stats, args.out)
    for variant, s in stats.items():
        print(f"{variant}: {s.recovered}/{s.total} recovered "
              f"({s.percentage:.1f}%), in-place tolerance {s.worst_case_force:.0f} N")
    print("wrote:", csv_path, "and", json_path)
    return 0


def cmd_scenario(args):
    cfg = load_config(args.config)
    spec = cfg.scenario
    variants = _variants(args)
    os.makedirs(args.out, exist_ok=True)
    status = 0
    for variant in variants:
        trace, code, tf = simulate(variant, cfg.stack, spec.command,
                                   spec.duration, pushes=spec.pushes)
        path = os.path.join(args.out, f"scenario_{variant}.csv")
        with open(path, "w") as fp:
            trace.write_csv(fp)
        outcome = "recovered" if code == FailureCode.NONE else "failed"
        print(f"{variant}: {outcome} (failure={code.value}"
              + (f" at t={tf:.3f}s" if tf is not None else "") + f"), trace -> {path}")
        if code != FailureCode.NONE:
            status = 1
    return status


def cmd_stats(args):
    path = os.path.join(args.out, "results.csv") if os.path.isdir(args.out) \
        else args.out
    results = []
    with open(path) as fp:
        header = fp.readline().strip().split(",")
        for line in fp:
            vals = dict(zip(header, line.strip().split(",")))
            results.append(ScenarioResult(
                vals["variant"], float(vals["force_N"]), float(vals["height_m"]),
                vals["side"], float(vals["speed_mps"]), float(vals["push_time_s"]),
                vals["outcome"], vals["failure_code"], float(vals["recovery_s"]),
                float(vals["peak_vdev"]), float(vals["peak_wdev"])))
    stats = compute_safeset_stats(results)
    payload = {v: {"recovered": s.recovered, "total": s.total,
                   "percentage": round(s.percentage, 4),
                   "worst_case_force_N": s.worst_case_force}
               for v, s in stats.items()}
    if "hlip" in stats and "mpc" in stats and stats["hlip"].percentage > 0:
        payload["ratio_mpc_over_hlip"] = round(
            stats["mpc"].percentage / stats["hlip"].percentage, 4)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wallbrace",
        description="walking / push-recovery experiments on the reduced-order plant")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="stepped-command tracking test")
    _add_common(p)
    p.add_argument("--axis", choices=("x", "y", "yaw"), default="x")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("sweep", help="push-recovery sweep over the grid")
    _add_common(p)
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenario", help="single scenario with trace dump")
    _add_common(p)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("stats", help="summarize an existing results.csv")
    p.add_argument("--out", default="out", help="results.csv or its directory")
    p.set_defaults(func=cmd_stats)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
