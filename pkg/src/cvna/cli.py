"""Command line entry point: ``cvna <subcommand> [--config FILE] [--seed S] [--out DIR]``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

from . import experiment
from .experiment import RunConfig
from .shocks import correlated_pmf


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _resolve(args) -> RunConfig:
    cfg = experiment.load_config(args.config) if args.config else RunConfig()
    if args.full_scale:
        cfg = cfg.full_scale()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    for name in ("n", "degrees", "leverages", "rhos", "sizes"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    t0 = time.perf_counter()
    summaries = experiment.run_sweep(cfg)
    paths = experiment.write_outputs(summaries, cfg)
    print(f"{len(summaries)} cells in {time.perf_counter() - t0:.1f}s -> {paths['cells']}")
    return 0


def cmd_size_scan(args) -> int:
    cfg = _resolve(args)
    summaries = experiment.size_scan(cfg)
    paths = experiment.write_outputs(summaries, cfg)
    for s in summaries:
        print(f"n={s.n:6d} lev={s.leverage:g} rho={s.rho:g} q_mean={s.q_mean:.4f} "
              f"limit={s.q_limit:.4f}")
    print(f"-> {paths['cells']}")
    return 0


def cmd_analytic(args) -> int:
    cfg = _resolve(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = experiment.write_csv(experiment.analytic_table(cfg), experiment.ANALYTIC_COLUMNS,
                                out / "analytic.csv")
    print(path.read_text(), end="")
    return 0


def cmd_limit(args) -> int:
    cfg = _resolve(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = experiment.write_csv(experiment.limit_table(cfg), experiment.LIMIT_COLUMNS,
                                out / "limits.csv")
    print(path.read_text(), end="")
    return 0


def cmd_pmf(args) -> int:
    if len(args.counts) != len(args.probs):
        raise SystemExit("--counts and --probs need the same number of entries")
    value = correlated_pmf(args.counts, args.probs, args.rho)
    print(repr(value))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvna", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log every finished cell")
    common.add_argument("--config", type=Path, help="TOML file with RunConfig fields")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--full-scale", "--paper-scale", dest="full_scale", action="store_true",
                        help="n=10000 banks, 1000 shocks on each of 5 networks")
    common.add_argument("--n", type=int, help="number of banks")
    common.add_argument("--degrees", type=_ints, help="comma separated even degrees")
    common.add_argument("--leverages", type=_floats, help="comma separated leverages")
    common.add_argument("--rhos", type=_floats, help="comma separated correlations")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo sweep over all cells")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("analytic", parents=[common], help="mean-field expected default fraction")
    p.set_defaults(func=cmd_analytic)
    p = sub.add_parser("limit", parents=[common], help="infinite-diversification limits")
    p.set_defaults(func=cmd_limit)
    p = sub.add_parser("size-scan", parents=[common], help="complete networks at several sizes")
    p.add_argument("--sizes", type=_ints, help="comma separated system sizes")
    p.set_defaults(func=cmd_size_scan)

    p = sub.add_parser("pmf", help="probability of compartment counts")
    p.add_argument("--counts", type=_ints, required=True, help="e.g. 2,0,0")
    p.add_argument("--probs", type=_floats, required=True, help="e.g. 0.5,0.3,0.2")
    p.add_argument("--rho", type=float, default=0.0)
    p.set_defaults(func=cmd_pmf)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(asctime)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
