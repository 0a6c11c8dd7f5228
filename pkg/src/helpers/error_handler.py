"""Error handling utilities for the DCARP toolkit scripts."""

import functools
import logging
import os
import sys
import traceback
from datetime import datetime
from typing import Callable, Optional

from src.helpers.errors import DcarpError
from src.helpers.logger import default_logger as logger


def setup_error_logging(log_file: Optional[str] = None) -> Optional[str]:
    """Set up logging to write to both console and file.

    File logging is enabled by DCARP_LOG_TO_FILE or by passing ``log_file`` explicitly.

    Args:
        log_file: Optional path to log file. If None, a daily file under
            ``~/.dcarp-toolkit/logs`` is used when the environment switch is on.

    Returns:
        The path to the log file or None if file logging is disabled
    """
    env_log_to_file = os.environ.get("DCARP_LOG_TO_FILE", "").lower()
    file_logging_enabled = env_log_to_file not in ("", "0", "false", "no", "off")

    if not file_logging_enabled and log_file is None:
        return None

    if log_file is None:
        log_dir = os.path.expanduser("~/.dcarp-toolkit/logs")
        os.makedirs(log_dir, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d")
        log_file = os.path.join(log_dir, f"dcarp-toolkit-{timestamp}.log")

    toolkit_logger = logger.logger
    has_file_handler = any(isinstance(h, logging.FileHandler) for h in toolkit_logger.handlers)

    if not has_file_handler:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))
        file_handler.setLevel(logging.DEBUG)
        toolkit_logger.addHandler(file_handler)
        logger.debug(f"Logging to file: {log_file}")

    return log_file


def exit_code_for(error: Exception) -> int:
    """Map an exception to the documented process exit code."""
    if isinstance(error, DcarpError):
        return error.exit_code
    return 1


def handle_error(error: Exception, exit_code: Optional[int] = None, log_file: Optional[str] = None):
    """Log the stack trace, print a short message and exit.

    Args:
        error: The exception that was raised
        exit_code: Exit code to use; derived from the exception when None
        log_file: Optional path to the active log file
    """
    stack_trace = traceback.format_exc()

    logger.debug(f"Error occurred: {error}")
    logger.debug(f"Stack trace:\n{stack_trace}")

    RED = "\033[31m"
    YELLOW = "\033[33m"
    CYAN = "\033[36m"
    RESET = "\033[0m"

    sys.stderr.write(f"\n{RED}Error:{RESET} {YELLOW}{error}{RESET}\n\n")
    if log_file:
        sys.stderr.write(f"See {CYAN}{log_file}{RESET} for detailed information.\n\n")

    sys.exit(exit_code if exit_code is not None else exit_code_for(error))


def wrap_main(main_func: Callable) -> Callable:
    """Decorator to wrap main functions with error handling.

    ``DcarpError`` and ``ValueError`` become a colored message and the matching exit code
    (1 usage, 2 parse/infeasible). Anything else is logged and re-raised.

    Args:
        main_func: The main function to wrap

    Returns:
        A wrapped function with error handling
    """

    @functools.wraps(main_func)
    def wrapped_main(*args, **kwargs):
        log_file = setup_error_logging()

        try:
            return main_func(*args, **kwargs)
        except ValueError as e:
            handle_error(e, log_file=log_file)
        except Exception as e:
            logger.error(f"Unexpected error: {e}")
            logger.error(f"Stack trace:\n{traceback.format_exc()}")
            raise

    return wrapped_main
