"""
Top-level argument parser and dispatch.

Exit codes: 0 success, 2 usage problems (bad flags, invalid configuration,
missing files, unsupported file schema), 1 computation failures.
"""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from app import __version__
from app.cli.commands import COMMANDS
from app.errors import SebaError
from app.models.reports import REPORT_SCHEMA
from app.services.spectrum_store import NORMS_SCHEMA, PERTURBED_SCHEMA, SCHEMA_VERSION

logger = logging.getLogger("seba")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seba",
        description="Spectra, trace identities and spacing statistics of a point scatterer on a flat torus.",
    )
    parser.add_argument("--config", help="key=value configuration file; flags override its values")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"seba-toolkit {__version__} "
            f"({NORMS_SCHEMA} {SCHEMA_VERSION}, {PERTURBED_SCHEMA} {SCHEMA_VERSION}, {REPORT_SCHEMA})"
        ),
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    """One stderr handler; stdout stays reserved for data."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run exactly one subcommand and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage (status 2) or the version (status 0)
        return exc.code if isinstance(exc.code, int) else 2

    configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error("❌ Invalid configuration:\n%s", e)
        return 2
    except FileNotFoundError as e:
        logger.error("❌ %s", e)
        return 2
    except SebaError as e:
        logger.error("❌ %s: %s", type(e).__name__, e)
        return e.exit_code


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
