"""Custom argparse helpers."""

import argparse
import sys
from typing import List, Optional

from src.helpers.errors import UsageError


class CustomHelpFormatter(argparse.RawDescriptionHelpFormatter):
    """Custom help formatter to modify the help output."""

    def format_help(self):
        help_text = super().format_help()
        # Keep the usage line and the hand-written epilog only
        help_text = help_text.split("\n\n")[0] + "\n\n" + help_text.split("\n\n")[-1]
        help_text = help_text.replace("usage:", "Usage:")
        return help_text


class HelpfulArgumentParser(argparse.ArgumentParser):
    """Argument parser that shows help if no arguments are provided.

    Parse errors exit with status 1, the toolkit's usage-error code.
    """

    def parse_args(
        self, args: Optional[List[str]] = None, namespace: Optional[argparse.Namespace] = None
    ) -> argparse.Namespace:
        if args is None and len(sys.argv) == 1:
            self.print_help()
            sys.exit(0)
        return super().parse_args(args, namespace)

    def error(self, message):
        """Override error method to avoid printing usage twice."""
        self.print_usage = lambda file: None
        sys.stderr.write(f"Error: {message}\n\n")
        self.print_help(sys.stderr)
        self.exit(UsageError.exit_code)


def positive_float(value: str) -> float:
    """argparse type for strictly positive floats."""
    try:
        number = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {value}") from None
    if number <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {value}")
    return number


def positive_int(value: str) -> int:
    """argparse type for strictly positive integers."""
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value}") from None
    if number <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {value}")
    return number
