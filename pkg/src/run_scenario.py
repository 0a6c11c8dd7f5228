#!/usr/bin/env python3

import argparse
import logging
from dataclasses import replace
from typing import List, Optional

from src.helpers.argparse_helper import CustomHelpFormatter, HelpfulArgumentParser
from src.helpers.error_handler import wrap_main
from src.helpers.logger import configure
from src.helpers.logger import default_logger as logger
from src.helpers.scenario import (
    ScenarioConfig,
    run_scenario,
    summarize,
    summary_to_text,
    write_outputs,
)


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = HelpfulArgumentParser(
        prog="dcarp scenario",
        description="Run a DCARP scenario: solve, simulate and log a chain of instances",
        formatter_class=CustomHelpFormatter,
        add_help=False,
        usage="%(prog)s config [--seed n] [-d] [-w workers] [-v] [-h]",
        epilog="""
Options:
  config           scenario configuration (YAML)
  --seed n         master seed (overrides master_seed in the config)
  -d               deterministic mode: evaluation budgets, wall_ms written as 0
  -w workers       parallel solver processes (default: config, $DCARP_WORKERS or 1)
  -v               debug logging
  -h               display usage
""",
    )
    parser.add_argument("config", help=argparse.SUPPRESS)
    parser.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    parser.add_argument("-d", "--deterministic", action="store_true", help=argparse.SUPPRESS)
    parser.add_argument("-w", "--workers", type=int, default=None, help=argparse.SUPPRESS)
    parser.add_argument("-v", "--verbose", action="store_true", help=argparse.SUPPRESS)
    parser.add_argument("-h", "--help", action="help", help="display usage")
    return parser.parse_args(argv)


@wrap_main
def main(argv: Optional[List[str]] = None) -> int:
    """Main function to run a scenario from a configuration file."""
    args = parse_args(argv)
    if args.verbose:
        configure(level=logging.DEBUG)
    config = ScenarioConfig.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.deterministic:
        overrides["deterministic"] = True
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = replace(config, **overrides)

    logger.info(
        f"Scenario {config.scenario_id}: {config.instances} instances, "
        f"{len(config.arms)} arms x {config.runs} runs, master seed {config.master_seed}"
    )
    log = run_scenario(config)
    write_outputs(log, config)
    print(summary_to_text(summarize(log.rows, config.baseline_arm), config.baseline_arm))

    failed = sum(1 for row in log.rows if not row.feasible)
    if failed:
        logger.warning(f"{failed} runs failed or produced infeasible solutions")
    logger.success(f"Scenario {config.scenario_id} finished with {len(log.instances)} instances")
    return 0


if __name__ == "__main__":
    main()
