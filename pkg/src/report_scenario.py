#!/usr/bin/env python3

import argparse
from pathlib import Path
from typing import List, Optional

from src.helpers.argparse_helper import CustomHelpFormatter, HelpfulArgumentParser
from src.helpers.error_handler import wrap_main
from src.helpers.errors import UsageError
from src.helpers.logger import default_logger as logger
from src.helpers.scenario import (
    read_instance_records,
    read_log,
    summarize,
    summary_to_csv,
    summary_to_text,
    win_rate_by_remaining,
    win_rate_to_text,
)


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = HelpfulArgumentParser(
        prog="dcarp report",
        description="Summarise scenario logs per instance and arm",
        formatter_class=CustomHelpFormatter,
        add_help=False,
        usage="%(prog)s log.csv [-b arm] [-o file] [-i instances.csv -c arm] [-h]",
        epilog="""
Options:
  log.csv          one or more scenario log files, comma separated
  -b arm           baseline arm for win/draw/lose counts
  -o file          write the summary CSV there
  -i file          instance records CSV, enables the remaining-task breakdown
  -c arm           arm compared against the baseline in that breakdown (default: transfer)
  -h               display usage
""",
    )
    parser.add_argument("log", help=argparse.SUPPRESS)
    parser.add_argument("-b", "--baseline", default=None, help=argparse.SUPPRESS)
    parser.add_argument("-o", "--output", default=None, help=argparse.SUPPRESS)
    parser.add_argument("-i", "--instances", default=None, help=argparse.SUPPRESS)
    parser.add_argument("-c", "--compare", default="transfer", help=argparse.SUPPRESS)
    parser.add_argument("-h", "--help", action="help", help="display usage")
    return parser.parse_args(argv)


@wrap_main
def main(argv: Optional[List[str]] = None) -> int:
    """Main function to report on scenario logs."""
    args = parse_args(argv)
    rows = []
    for name in args.log.split(","):
        if not Path(name).is_file():
            raise UsageError(f"log file not found: {name}")
        rows.extend(read_log(name))
    if not rows:
        raise UsageError("the log has no rows")
    if args.baseline is not None and args.baseline not in {row.arm for row in rows}:
        raise UsageError(f"baseline arm {args.baseline!r} does not appear in the log")

    summary = summarize(rows, args.baseline)
    print(summary_to_text(summary, args.baseline))
    if args.output:
        Path(args.output).write_text(summary_to_csv(summary), encoding="utf-8")
        logger.success(f"Wrote summary to {args.output}")

    if args.instances:
        if args.baseline is None:
            raise UsageError("the remaining-task breakdown needs a baseline arm (-b)")
        rates = win_rate_by_remaining(
            rows, read_instance_records(args.instances), args.compare, args.baseline
        )
        print()
        print(win_rate_to_text(rates, args.compare, args.baseline))
    return 0


if __name__ == "__main__":
    main()
