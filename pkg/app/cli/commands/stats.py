"""
`seba stats`: spacing statistics of norms and perturbed levels.
"""

import argparse

from app.cli.common import add_config_flag, load_config, write_report
from app.services.spectrum_store import read_norms, read_perturbed
from app.services.stats import analysis_cutoff, spacing_report


def register(subparsers) -> None:
    parser = subparsers.add_parser("stats", help="Spacing statistics and gap ratios up to x")
    add_config_flag(parser)
    parser.add_argument("--norms", required=True)
    parser.add_argument("--perturbed", required=True)
    parser.add_argument("--xmax", type=float, help="Analysis cutoff x (default: solved range)")
    parser.add_argument("--bins", type=int, help="Histogram bins over [0, 5]")
    parser.add_argument("--min-levels", type=int, help="Smallest N(x) accepted")
    parser.add_argument("--out", required=True, help="Output JSON path")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    spec = read_norms(args.norms)
    pert = read_perturbed(args.perturbed)
    config = load_config(
        args,
        dim=spec.form.dim,
        coeffs=spec.form.label(),
        cutoff=spec.cutoff,
        phi=pert.phase.phi,
        x_max=pert.x_max,
        stats_x=args.xmax,
        bins=args.bins,
        min_levels=args.min_levels,
    )
    x = analysis_cutoff(pert, config.stats_x)
    report = spacing_report(spec, pert, x, bins=config.bins, min_levels=config.min_levels, config=config.echo())
    write_report(report, args.out)
    return 0
