"""
Helpers shared by the subcommand modules.
"""

import argparse
import json
import sys
from typing import Any, Optional

from pydantic import BaseModel

from app.config import RunConfig, resolve_config
from app.services.spectrum_store import write_json


def add_config_flag(parser: argparse.ArgumentParser) -> None:
    """Accept --config after the subcommand too, without clobbering the global flag."""
    parser.add_argument("--config", default=argparse.SUPPRESS, help="key=value configuration file")


def load_config(args: argparse.Namespace, **overrides: Any) -> RunConfig:
    """Resolve file values and the given flag overrides into a RunConfig."""
    return resolve_config(getattr(args, "config", None), {"command": args.command, **overrides})


def write_report(report: BaseModel, path: str) -> None:
    write_json(path, report.model_dump(mode="json", by_alias=True))


def emit(text: str, stream: Optional[Any] = None) -> None:
    """Data goes to stdout; logging owns stderr."""
    (stream or sys.stdout).write(text)


def emit_json(payload: Any) -> None:
    emit(json.dumps(payload, sort_keys=True) + "\n")


def parse_sigma(value: str) -> Optional[float]:
    if value == "auto":
        return None
    try:
        return float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"sigma must be 'auto' or a number, got '{value}'") from exc
