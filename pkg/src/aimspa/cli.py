"""``aim`` command line entry point."""
from __future__ import annotations

import argparse
import logging
import sys

from .runner import EXIT_CONFIG, TASKS, ConfigError, ExperimentConfig, _parse_sites, run


def _seed_list(text: str) -> list[int]:
    """``"3"``, ``"0,4,7"`` or a half-open range ``"0:20"``."""
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi)))
    return [int(s) for s in text.split(",") if s]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aim", description="Anderson impurity model experiments")
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="run a single seed")
    parser.add_argument("--seeds", help="seed list: 0,1,2 or 0:20")
    parser.add_argument("--master-seed", type=int)
    parser.add_argument("--sites", help="impurity and bath counts as I,B")
    parser.add_argument("--depth", type=int)
    parser.add_argument("--d-max", type=int)
    parser.add_argument("--delta", type=float, action="append",
                        help="overlap-error target (repeatable)")
    parser.add_argument("--eta", type=float)
    parser.add_argument("--shots", type=int)
    parser.add_argument("--post-select", action="store_true", default=None)
    parser.add_argument("--restarts", type=int)
    parser.add_argument("--orbital", type=int)
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--out")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    cfg.task = args.task
    if args.sites is not None:
        cfg.n_imp, cfg.n_bath = _parse_sites(args.sites)
    if args.seeds is not None:
        try:
            cfg.seeds = _seed_list(args.seeds)
        except ValueError as exc:
            raise ConfigError(f"bad --seeds value {args.seeds!r}") from exc
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.delta:
        cfg.delta_targets = sorted(args.delta, reverse=True)
    overrides = {"master_seed": args.master_seed, "depth": args.depth, "d_max": args.d_max,
                 "eta": args.eta, "shots": args.shots, "post_select": args.post_select,
                 "restarts": args.restarts, "orbital": args.orbital, "jobs": args.jobs,
                 "out": args.out}
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except ConfigError as exc:
        print(f"aim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
