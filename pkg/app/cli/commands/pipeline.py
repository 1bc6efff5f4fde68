"""
`seba pipeline`: norms → solve → stats/heat/trace with cached spectra.
"""

import argparse
import logging

from app.cli.common import add_config_flag, emit_json, load_config
from app.services.pipeline import pipeline_summary, run_pipeline

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("pipeline", help="Run the end-to-end pipeline from a config file")
    add_config_flag(parser)
    parser.add_argument("--out-dir", help="Directory for stats.json, heat.csv and trace.json")
    parser.add_argument("--cache-dir", help="Directory of cached spectra")
    parser.add_argument("--workers", type=int)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = load_config(args, out_dir=args.out_dir, cache_dir=args.cache_dir, workers=args.workers)
    state = run_pipeline(config)
    emit_json(pipeline_summary(state))
    if state.get("status") != "reported":
        logger.error("❌ Pipeline stopped: %s", state.get("error_message"))
        return 1
    return 0
