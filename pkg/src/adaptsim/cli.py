"""Command line: ``run``, ``validate`` and ``compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import COMPARISON_MODES, MODES, ConfigError, parse_config, preset_path
from .experiment import SERVICES, failed, run_experiment
from .metrics import format_table, mode_average, read_summary, write_summary


def _config(path: str | None):
    return parse_config(path if path else preset_path())


def cmd_run(args) -> int:
    config = _config(args.config)
    if args.seed is not None:
        config = config.with_overrides(seed=args.seed)
    if args.duration is not None:
        config = config.with_overrides(duration=args.duration)
    modes = args.mode or list(COMPARISON_MODES)
    services = args.service or list(SERVICES)
    out = Path(args.out) if args.out else config.output_dir
    rows = run_experiment(config, modes, services, out, workers=args.workers)
    print(format_table(rows))
    print(f"reports written to {out}")
    bad = failed(rows)
    for s in bad:
        print(f"failed: {s.mode} service {s.service}", file=sys.stderr)
    return 1 if bad else 0


def cmd_validate(args) -> int:
    config = _config(args.config)
    modes = ", ".join(sorted(config.deployments))
    print(f"ok: {len(config.trace)} instances, peak {max(config.trace.counts)} requests, "
          f"{len(config.goals)} goals, {len(config.tactics)} tactics, "
          f"{len(config.rules)} rules; deployments for {modes}")
    return 0


def cmd_compare(args) -> int:
    rows = []
    for path in args.summaries:
        rows.extend(s for s in read_summary(path) if s.service != "avg")
    merged = []
    for mode in dict.fromkeys(s.mode for s in rows):
        mode_rows = [s for s in rows if s.mode == mode]
        merged.extend(mode_rows)
        merged.append(mode_average(mode, mode_rows))
    print(format_table(merged))
    if args.out:
        write_summary(args.out, merged)
    return 1 if failed(merged) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a mode x service matrix and write CSV reports")
    run.add_argument("--config", help="experiment INI file (default: bundled preset)")
    run.add_argument("--mode", action="append", choices=MODES,
                     help="repeatable; default: the four comparison modes")
    run.add_argument("--service", action="append", type=int, choices=SERVICES,
                     help="repeatable; default: all five service types")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seed", type=int, help="overrides the config seed")
    run.add_argument("--duration", type=int, help="number of trace instances to run")
    run.add_argument("--workers", type=int, default=1, help="parallel runs")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config file without running")
    val.add_argument("--config", help="experiment INI file (default: bundled preset)")
    val.set_defaults(func=cmd_validate)

    cmp_ = sub.add_parser("compare", help="join existing summary.csv files")
    cmp_.add_argument("summaries", nargs="+", help="summary.csv files")
    cmp_.add_argument("--out", help="write the joined summary here")
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
