"""Command-line entry point.

Subcommands: calibrate, sweep, contours, dump-config.  Exit code 0 means
the command ran and every acceptance threshold in the config was met, 1
means thresholds were missed, 2 means usage or config error.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

from .calibrate import FULL_RANGE
from .experiment import (ConfigError, cmd_calibrate, cmd_contours, cmd_sweep,
                         default_config, dump_config, parse_config)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tidac-cal",
        description="Twofold time-interleaved DAC image-calibration experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("calibrate", "run the annealing calibration per seed at one tone"),
            ("sweep", "pre/post calibration spur across Nyquist, vs grid search"),
            ("contours", "image-magnitude level curves (gain vs duty error)"),
            ("dump-config", "print the default config as YAML")):
        p = sub.add_parser(name, help=help_text)
        if name != "dump-config":
            p.add_argument("--config", help="YAML experiment config (defaults used if omitted)")
            p.add_argument("--seed", type=int, nargs="+", help="override the config seed list")
            p.add_argument("--out", help="override the output directory")
            p.add_argument("--noise-off", action="store_true",
                           help="disable measurement noise")
            p.add_argument("--neighbor-mode", choices=["window", "full"],
                           help="neighbor draw mode for the annealer")
    return parser


def _load_config(args):
    cfg = parse_config(args.config) if args.config else default_config()
    if args.seed:
        cfg = replace(cfg, seeds=tuple(args.seed))
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    if args.noise_off:
        cfg = replace(cfg, capture=replace(cfg.capture, noise_floor_dbc=-math.inf))
    if args.neighbor_mode == "full":
        cfg = replace(cfg, anneal=replace(cfg.anneal, neighbor_window=FULL_RANGE))
    elif args.neighbor_mode == "window":
        cfg = replace(cfg, anneal=replace(cfg.anneal, neighbor_window=24))
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "dump-config":
        sys.stdout.write(dump_config(default_config()))
        return 0
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    runner = {"calibrate": cmd_calibrate, "sweep": cmd_sweep,
              "contours": cmd_contours}[args.command]
    report, ok = runner(cfg)
    summary = report.get("summary", {})
    print(f"{args.command}: wrote reports to {cfg.output_dir} "
          f"(passed={summary.get('passed')})")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
