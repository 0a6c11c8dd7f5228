#!/usr/bin/env python3

import sys
from typing import Callable, Dict, List, Optional

from src import convert_instance, report_scenario, run_scenario, solve_instance
from src.helpers.errors import UsageError

COMMANDS: Dict[str, Callable[[Optional[List[str]]], int]] = {
    "solve": solve_instance.main,
    "scenario": run_scenario.main,
    "convert": convert_instance.main,
    "report": report_scenario.main,
}

USAGE = """Usage: dcarp <command> [options]

Commands:
  solve      solve one instance and print an executable solution
  scenario   run a scenario chain from a YAML configuration
  convert    convert an egl benchmark file to dcarp-text
  report     summarise scenario logs

Run 'dcarp <command> -h' for the options of a command.
"""


def main(argv: Optional[List[str]] = None) -> int:
    """Dispatch to a subcommand."""
    args = sys.argv[1:] if argv is None else list(argv)
    if not args or args[0] in ("-h", "--help"):
        sys.stdout.write(USAGE)
        return 0 if args else UsageError.exit_code
    command = COMMANDS.get(args[0])
    if command is None:
        sys.stderr.write(f"dcarp: unknown command '{args[0]}'\n\n{USAGE}")
        return UsageError.exit_code
    return command(args[1:])


if __name__ == "__main__":
    sys.exit(main())
