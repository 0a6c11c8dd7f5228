#!/usr/bin/env python3

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from src.helpers.argparse_helper import (
    CustomHelpFormatter,
    HelpfulArgumentParser,
    positive_float,
    positive_int,
)
from src.helpers.error_handler import wrap_main
from src.helpers.errors import UsageError
from src.helpers.init_strategies import RESTART, STRATEGIES
from src.helpers.logger import default_logger as logger
from src.helpers.routing_core import DcarpInstance, format_solution, parse_solution
from src.helpers.scenario import gofvt_solve
from src.helpers.solvers import SOLVERS, SolverBudget


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = HelpfulArgumentParser(
        prog="dcarp solve",
        description="Solve one DCARP instance and print an executable solution",
        formatter_class=CustomHelpFormatter,
        add_help=False,
        usage="%(prog)s instance [-s strategy] [-a solver] [-b seconds] [-e count] "
        "[--seed n] [-p file] [-o file] [-h]",
        epilog="""
Options:
  instance         dcarp-text instance file
  -s strategy      initialisation strategy: restart, transfer, return_first (default: restart)
  -a solver        solver: memetic, descent (default: memetic)
  -b seconds       wall-clock budget (default: 60)
  -e count         stop after this many evaluations instead (deterministic)
  --seed n         random seed (default: 0)
  -p file          previous best solution, used by the transfer strategy
  -o file          write the solution there instead of stdout
  -h               display usage
""",
    )
    parser.add_argument("instance", help=argparse.SUPPRESS)
    parser.add_argument(
        "-s", "--strategy", choices=STRATEGIES, default=RESTART, help=argparse.SUPPRESS
    )
    parser.add_argument(
        "-a", "--solver", choices=sorted(SOLVERS), default="memetic", help=argparse.SUPPRESS
    )
    parser.add_argument("-b", "--budget", type=positive_float, default=60.0, help=argparse.SUPPRESS)
    parser.add_argument(
        "-e", "--max-evaluations", type=positive_int, default=None, help=argparse.SUPPRESS
    )
    parser.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    parser.add_argument("-p", "--previous", default=None, help=argparse.SUPPRESS)
    parser.add_argument("-o", "--output", default=None, help=argparse.SUPPRESS)
    parser.add_argument("-h", "--help", action="help", help="display usage")
    return parser.parse_args(argv)


def read_text(path: str, what: str) -> str:
    """Read a user-supplied file, turning a missing file into a usage error."""
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {what} {path}: {e.strerror or e}") from e


@wrap_main
def main(argv: Optional[List[str]] = None) -> int:
    """Main function to solve a single instance."""
    args = parse_args(argv)
    if args.strategy == "transfer" and args.previous is None:
        logger.warning("transfer without --previous falls back to restart")

    instance = DcarpInstance.from_text(read_text(args.instance, "instance"))
    previous = parse_solution(read_text(args.previous, "solution")) if args.previous else None
    budget = SolverBudget(
        time_limit=args.budget, seed=args.seed, max_evaluations=args.max_evaluations
    )
    logger.info(
        f"Solving {args.instance}: {len(instance.network.tasks)} tasks, "
        f"{len(instance.outside_vehicles)} outside vehicles, {args.strategy}/{args.solver}"
    )
    result = gofvt_solve(instance, args.strategy, args.solver, budget, previous)
    text = format_solution(result.solution)

    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        logger.success(f"Wrote solution to {args.output}")
    else:
        sys.stdout.write(text)
    print(f"cost {result.cost}")
    return 0


if __name__ == "__main__":
    main()
