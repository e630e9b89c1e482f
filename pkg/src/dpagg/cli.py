"""Command line entry point: ``dpagg run --config scenario.json``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .config import BEHAVIOURS
from .errors import ConfigError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpagg", description="Simulate verifiable private aggregation rounds.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write per-round reports")
    run.add_argument("--config", required=True, type=Path, help="scenario file (JSON)")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--pit", choices=("on", "off"), help="store evaluation pairs (on) or ciphertexts (off)")
    run.add_argument("--adversary", action="append", choices=BEHAVIOURS, metavar="NAME",
                     help="scripted misbehaviour; repeat for several (choices: %(choices)s)")
    run.add_argument("--out", type=Path, default=Path("out"), help="report directory (default: out)")
    run.add_argument("--check", action="store_true",
                     help="exit non-zero if an injected fault goes undetected or an honest round misbehaves")
    run.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .harness import run_scenario  # heavy imports only after argument parsing

    try:
        cfg = cfgmod.load(args.config)
        cfg = cfg.with_overrides(seed=args.seed,
                                 pit=None if args.pit is None else args.pit == "on",
                                 adversary=args.adversary)
        code, reports = run_scenario(cfg, args.out, check=args.check)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    for rep in reports:
        kinds = ", ".join(sorted(rep.detected_kinds)) or "none"
        print(f"round {rep.round_t}: {rep.status}; detections: {kinds}; epsilon={rep.epsilon:.3f}")
    print(f"reports written to {args.out}")
    if code:
        print("check failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
