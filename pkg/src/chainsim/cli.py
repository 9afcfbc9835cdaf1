"""Command-line entry point.

Subcommands: gen-terrain, run, bench, report, plot. Exit codes: 0 on
success, 1 on usage or internal error, 2 when a single trial ran cleanly
but did not reach the target.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import GENERATOR_VERSION
from .baselines import METHOD_ORDER
from .bench import (BenchReport, aggregates_csv, format_group_table,
                    run_benchmark, run_trial)
from .config import SimConfig, parse_set_overrides
from .terrain import (SLOPE_REGION, SLOPE_RESOLUTION, TerrainSamplingError,
                      generate_dataset, load_terrain, slope_stats,
                      terrain_id as terrain_id_of)


def _load_config(args) -> SimConfig:
    cfg = SimConfig.load(args.config) if args.config else SimConfig()
    if args.set:
        cfg = cfg.with_overrides(parse_set_overrides(args.set))
    return cfg


def cmd_gen_terrain(args) -> int:
    if args.count < 1:
        print("error: --count must be >= 1", file=sys.stderr)
        return 1
    groups = ("A", "B") if args.group == "both" else (args.group,)
    try:
        manifest = generate_dataset(args.count, args.seed, args.out,
                                    groups=groups)
    except (TerrainSamplingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for entry in manifest["terrains"]:
        print(f"{entry['file']}: group {entry['group']}, "
              f"avg slope {entry['avg_slope_deg']:.1f} deg, "
              f"max {entry['max_slope_deg']:.1f} deg")
    print(f"wrote {len(manifest['terrains'])} terrains + manifest to "
          f"{args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    try:
        terrain, _ = load_terrain(args.terrain)
        record = run_trial(terrain, args.method, cfg, seed=args.seed,
                           log_path=args.log)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = record.to_dict()
    text = json.dumps(payload, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if record.success else 2


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    methods = (list(METHOD_ORDER) if args.methods == ["all"]
               else args.methods)
    try:
        report = run_benchmark(args.manifest, methods, cfg, jobs=args.jobs)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    report.save(out_dir / "results.json")
    (out_dir / "tables.csv").write_text(aggregates_csv(report.aggregates))
    for group in sorted(report.aggregates):
        table = format_group_table(report.aggregates, group)
        (out_dir / f"table_{group}.txt").write_text(table)
        print(table)
    print(f"wrote results to {out_dir}")
    return 0


def cmd_report(args) -> int:
    try:
        report = BenchReport.load(args.results)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: cannot read results: {exc}", file=sys.stderr)
        return 1
    for group in sorted(report.aggregates):
        print(format_group_table(report.aggregates, group))
    if args.out:
        Path(args.out).write_text(aggregates_csv(report.aggregates))
    return 0


def read_trajectory_log(path):
    """Parse a trajectory CSV; returns (metadata dict, structured rows)."""
    meta = {}
    with open(path) as fh:
        lines = fh.readlines()
    data_lines = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value
        elif line.strip():
            data_lines.append(line)
    if len(data_lines) < 2:
        raise ValueError(f"trajectory log {path} has no data rows")
    header = data_lines[0].strip().split(",")
    rows = np.loadtxt(data_lines[1:], delimiter=",", ndmin=2)
    if rows.shape[1] != len(header):
        raise ValueError(f"malformed trajectory log {path}")
    return meta, {name: rows[:, k] for k, name in enumerate(header)}


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    try:
        meta, cols = read_trajectory_log(args.log)
        terrain, record = load_terrain(args.terrain)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if meta.get("terrain_id") != terrain_id_of(terrain):
        print(f"error: log was recorded on terrain {meta.get('terrain_id')} "
              f"but {args.terrain} is {terrain_id_of(terrain)}",
              file=sys.stderr)
        return 1

    from .terrain import height
    lo, hi = SLOPE_REGION
    grid = np.linspace(lo, hi, 221)
    gx, gy = np.meshgrid(grid, grid, indexing="ij")
    hmap = height(terrain, gx, gy)

    fig, ax = plt.subplots(figsize=(7, 6))
    cs = ax.contourf(gx, gy, hmap, levels=24, cmap="terrain", alpha=0.85)
    fig.colorbar(cs, ax=ax, label="height [m]")

    robots = cols["robot"].astype(int)
    for rid in sorted(set(robots)):
        mask = robots == rid
        ax.plot(cols["x"][mask], cols["y"][mask], lw=1.2,
                label=f"robot {rid}")

    # stiffness switch markers on the leader track
    lead = robots == 1
    t_l, x_l, y_l = cols["t"][lead], cols["x"][lead], cols["y"][lead]
    k_l = cols["k_alpha"][lead]
    changed = np.flatnonzero(np.diff(k_l) != 0) + 1
    if changed.size:
        ax.scatter(x_l[changed], y_l[changed], marker="^", s=28,
                   color="black", zorder=5,
                   label=f"stiffness switch ({changed.size})")

    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="upper left", fontsize=8)
    ax.set_title(f"{meta.get('terrain_id')} "
                 f"(avg slope {record['avg_slope_deg']:.1f} deg)")
    out = args.out or "trajectory.svg"
    fig.savefig(out)
    plt.close(fig)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", help="output path")

    parser = argparse.ArgumentParser(
        prog="chainsim",
        description="chained differential-drive robot navigation benchmark")
    parser.add_argument("--version", action="version",
                        version=GENERATOR_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-terrain", parents=[common],
                       help="generate a terrain dataset")
    p.add_argument("--group", choices=["A", "B", "both"], default="both")
    p.add_argument("--count", type=int, required=True,
                   help="terrains per group")
    p.set_defaults(func=cmd_gen_terrain)

    p = sub.add_parser("run", parents=[common], help="run a single trial")
    p.add_argument("terrain", help="terrain JSON file")
    p.add_argument("--method", required=True,
                   help=f"one of: {', '.join(METHOD_ORDER)}")
    p.add_argument("--log", help="write a trajectory CSV here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", parents=[common],
                       help="run the benchmark over a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--methods", nargs="+", default=["all"])
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", parents=[common],
                       help="format tables from a results file")
    p.add_argument("results", help="results.json from bench")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", parents=[common],
                       help="render terrain contours and trajectories")
    p.add_argument("--log", required=True, help="trajectory CSV")
    p.add_argument("--terrain", required=True, help="terrain JSON file")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gen-terrain" and not args.out:
        parser.error("gen-terrain requires --out")
    try:
        return args.func(args)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
