"""
Command-line entry point.

    python -m vfpk.main <command> --config run.ini [--out DIR] [--seed N] [--quiet]

Exit codes: 0 ok, 2 config error, 3 non-convergence, 4 CFL violation,
5 sweep partial failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from vfpk import __version__
from vfpk.commands.common import RunContext, prepare_run
from vfpk.commands.diagnose import run_diagnose
from vfpk.commands.evolve import run_evolve
from vfpk.commands.linear import run_linear
from vfpk.commands.poincare import run_poincare
from vfpk.commands.steady import run_steady
from vfpk.commands.sweep import run_sweep
from vfpk.core.errors import VFPKError
from vfpk.core.logging import bind_run, get_logger, log_fields, setup_logging
from vfpk.core.schema import load_config, with_overrides

logger = get_logger(__name__)

COMMANDS: Dict[str, Callable[[RunContext], int]] = {
    "steady": run_steady,
    "evolve": run_evolve,
    "linear": run_linear,
    "diagnose": run_diagnose,
    "poincare": run_poincare,
    "sweep": run_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vfpk", description="Vlasov-Fokker-Planck steady states and relaxation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, runner in COMMANDS.items():
        sub = subparsers.add_parser(name, help=(runner.__doc__ or name).strip().splitlines()[0])
        sub.add_argument("--config", required=True, type=Path, help="run config (INI)")
        sub.add_argument("--out", type=Path, default=None, help="output directory (default: run.output_dir)")
        sub.add_argument("--seed", type=int, default=None, help="override run.seed")
        sub.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(quiet=args.quiet)
    bind_run(command=args.command)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = with_overrides(cfg, {"run.seed": args.seed})
        ctx = prepare_run(cfg, args.out, base_dir=args.config.resolve().parent)
        code = COMMANDS[args.command](ctx)
    except VFPKError as e:
        logger.error(e.message, extra=log_fields(command=args.command, exit_code=e.exit_code, **e.fields))
        return e.exit_code
    except Exception:
        logger.exception("unhandled error", extra=log_fields(command=args.command))
        return 1
    logger.info("command finished", extra=log_fields(command=args.command, exit_code=code))
    return code


if __name__ == "__main__":
    sys.exit(main())
