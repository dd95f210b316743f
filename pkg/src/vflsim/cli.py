"""Command-line entry point: ``vflsim run|sweep|report|gen-data``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from . import synthetic
from .config import SWEEP_AXES, ExperimentConfig, load_config
from .data import BUILTIN_SCHEMAS, write_csv
from .errors import ConfigError, VflError
from .experiment import format_table, report, run, sweep

OUT_ROOT_ENV = "VFLSIM_OUT_ROOT"


def _out_dir(args, cfg: ExperimentConfig, suffix: str = "") -> Path:
    if args.out:
        return Path(args.out)
    if cfg.out_dir:
        return Path(cfg.out_dir)
    root = Path(os.environ.get(OUT_ROOT_ENV, "results"))
    return root / (Path(args.config).stem + suffix)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg = cfg.replace(train=dataclasses.replace(cfg.train, seeds=(args.seed_override,)))
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    result = run(cfg, out)
    aucs = result.final_aucs()
    print(f"wrote {out} (final test AUC mean {sum(aucs) / len(aucs):.4f} over {len(aucs)} seed(s))")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"unknown axis {args.axis!r}; choose from {', '.join(SWEEP_AXES)}")
    out = _out_dir(args, cfg, f"-{args.axis}")
    sweep(cfg, args.axis, values, out, jobs=args.jobs)
    print(f"wrote {out / 'summary.csv'}")
    return 0


def cmd_report(args) -> int:
    dest, table = report(args.results_dir)
    if args.table:
        print(format_table(table))
    print(f"wrote {dest}")
    return 0


def cmd_gen_data(args) -> int:
    table, schema = synthetic.generate(args.kind, args.rows, args.seed,
                                       missing_rate=args.missing_rate)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(table, schema, args.out)
    print(f"wrote {args.out} ({args.rows} rows, {len(schema.attributes)} attributes)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vflsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="experiment INI file")
        sp.add_argument("--seed-override", type=int, default=None,
                        help="replace the config's seed list with this single seed")
        sp.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ROOT_ENV}/<config>)")

    sp = sub.add_parser("run", help="train one configuration for every seed")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a configuration once per value of one axis")
    common(sp)
    sp.add_argument("--axis", required=True, help=", ".join(SWEEP_AXES))
    sp.add_argument("--values", required=True, help="comma-separated values; 'none' disables dp/quantize")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="aggregate per-epoch AUC across seeds")
    sp.add_argument("results_dir")
    sp.add_argument("--table", action="store_true", help="also print a text table")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("gen-data", help="write a synthetic Adult-like or Avazu-like CSV")
    sp.add_argument("--kind", choices=sorted(BUILTIN_SCHEMAS), default="adult")
    sp.add_argument("--rows", type=int, default=6250)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--missing-rate", type=float, default=0.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (VflError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
