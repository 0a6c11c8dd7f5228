#!/usr/bin/env python3

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from src.helpers.argparse_helper import CustomHelpFormatter, HelpfulArgumentParser
from src.helpers.error_handler import wrap_main
from src.helpers.errors import UsageError
from src.helpers.logger import default_logger as logger
from src.helpers.net_model import convert_egl


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = HelpfulArgumentParser(
        prog="dcarp convert",
        description="Convert an egl benchmark file to dcarp-text",
        formatter_class=CustomHelpFormatter,
        add_help=False,
        usage="%(prog)s egl-file [-o file] [-h]",
        epilog="""
Options:
  egl-file         benchmark instance in egl format
  -o file          write the dcarp-text there instead of stdout
  -h               display usage
""",
    )
    parser.add_argument("egl_file", help=argparse.SUPPRESS)
    parser.add_argument("-o", "--output", default=None, help=argparse.SUPPRESS)
    parser.add_argument("-h", "--help", action="help", help="display usage")
    return parser.parse_args(argv)


@wrap_main
def main(argv: Optional[List[str]] = None) -> int:
    """Main function to convert a benchmark instance."""
    args = parse_args(argv)
    try:
        source = Path(args.egl_file).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {args.egl_file}: {e.strerror or e}") from e

    text = convert_egl(source)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        logger.success(f"Converted {args.egl_file} to {args.output}")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    main()
