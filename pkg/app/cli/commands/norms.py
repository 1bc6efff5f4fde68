"""
`seba norms`: enumerate the distinct norms of a diagonal form.
"""

import argparse
import logging

from app.cli.common import add_config_flag, load_config
from app.services.lattice import enumerate_norms
from app.services.spectrum_store import write_norms

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("norms", help="Enumerate distinct norms and multiplicities")
    add_config_flag(parser)
    parser.add_argument("--dim", type=int, help="Torus dimension (2 or 3)")
    parser.add_argument("--coeffs", help="Form coefficients, e.g. 1,1 or 1/2,3,5")
    parser.add_argument("--cutoff", type=float, help="Largest norm to enumerate")
    parser.add_argument("--merge-tol", type=float, help="Relative merge tolerance for float forms")
    parser.add_argument("--memory-budget", type=int, help="Enumeration memory budget in bytes")
    parser.add_argument("--out", required=True, help="Output CSV path")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    config = load_config(
        args,
        dim=args.dim,
        coeffs=args.coeffs,
        cutoff=args.cutoff,
        merge_tol=args.merge_tol,
        memory_budget=args.memory_budget,
    )
    spec = enumerate_norms(
        config.form, config.resolved_cutoff, merge_tol=config.merge_tol, memory_budget=config.memory_budget
    )
    write_norms(spec, args.out)
    return 0
