"""Command-line interface.

Exit codes: 0 on success, 1 on a validation error (bad config, unknown
benchmark, bad arguments), 2 when a run is marked failed.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__, benchmarks
from .exceptions import ConfigError
from .harness import (AXES, TABLES, emit_plotdata, load_config, load_record, reproduce,
                      run_experiment, sweep, write_record)

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(args):
    changes = {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        changes[key.strip()] = _parse_value(value)
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.output is not None:
        changes["output"] = args.output
    return changes


def _config(args):
    config = load_config(args.config)
    changes = _overrides(args)
    return config.with_overrides(**changes) if changes else config


def _print_summary(record):
    label = record.config.method
    if record.axis is not None:
        label += f" [{record.axis}={record.axis_value}]"
    agg = record.aggregates
    parts = [f"{m} {agg[m]['median']:.4g}" for m in ("nrmse", "r2", "tll") if m in agg]
    print(f"{label}: {record.status}, {record.n_failed}/{len(record.replications)} failed; "
          + ", ".join(parts))


def cmd_list_benchmarks(args):
    for fn in benchmarks.catalog():
        sl, sh = fn.default_noise
        print(f"{fn.name:12s} d={fn.dim:<3d} variants={','.join(fn.variants)} "
              f"default={fn.default_variant} noise=({sl:g}, {sh:g})")
    print("meng_nd_<d>  scalable Meng function at any d >= 2")
    return EXIT_OK


def cmd_run(args):
    config = _config(args)
    record = run_experiment(config)
    _print_summary(record)
    if config.output:
        emit_plotdata([record], Path(config.output) / "plotdata.csv")
    return EXIT_OK if record.status == "ok" else EXIT_FAILED


def cmd_sweep(args):
    config = _config(args)
    values = [_parse_value(v) for v in args.values]
    records = sweep(config, args.axis, values)
    for record in records:
        _print_summary(record)
    if config.output:
        emit_plotdata(records, Path(config.output) / "plotdata.csv")
    return EXIT_OK if all(r.status == "ok" for r in records) else EXIT_FAILED


def cmd_reproduce(args):
    groups = reproduce(args.table, replications=args.replications, output=args.output)
    records = [r for recs in groups.values() for r in recs]
    for record in records:
        _print_summary(record)
    print("fit times are machine dependent; compare ratios only")
    return EXIT_OK if all(r.status == "ok" for r in records) else EXIT_FAILED


def cmd_emit_plotdata(args):
    records = [load_record(p) for p in args.records]
    text = emit_plotdata(records, args.output)
    if args.output is None:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mfsurrogate",
                                     description="Multi-fidelity surrogate experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list-benchmarks", help="list the benchmark catalog")

    def config_args(p):
        p.add_argument("config", help="experiment config (JSON)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key; VALUE is parsed as JSON when possible")
        p.add_argument("--replications", type=int)
        p.add_argument("--seed", type=int, help="base seed")
        p.add_argument("--output", help="output directory")

    config_args(sub.add_parser("run", help="run one experiment"))
    p = sub.add_parser("sweep", help="run one experiment per axis value")
    config_args(p)
    p.add_argument("--axis", required=True, choices=sorted(AXES))
    p.add_argument("--values", required=True, nargs="+")

    p = sub.add_parser("reproduce", help="run the canned desk-scale study of a table")
    p.add_argument("table", help=", ".join(f"{k}: {v[0]}" for k, v in TABLES.items()))
    p.add_argument("--replications", type=int)
    p.add_argument("--output", help="output directory")

    p = sub.add_parser("emit-plotdata", help="write plot data for saved records")
    p.add_argument("records", nargs="+", help="record.json files or their directories")
    p.add_argument("--output", help="CSV path (default: stdout)")
    return parser


COMMANDS = {"list-benchmarks": cmd_list_benchmarks, "run": cmd_run, "sweep": cmd_sweep,
            "reproduce": cmd_reproduce, "emit-plotdata": cmd_emit_plotdata}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
