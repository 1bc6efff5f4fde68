"""
`seba heat`: heat-trace sums over a grid of beta.
"""

import argparse

from app.cli.common import add_config_flag, load_config
from app.services.spectrum_store import read_norms, read_perturbed, write_heat
from app.services.stats import heat_sweep


def register(subparsers) -> None:
    parser = subparsers.add_parser("heat", help="Heat-trace sums A_tilde(beta) and the difference form")
    add_config_flag(parser)
    parser.add_argument("--norms", required=True)
    parser.add_argument("--perturbed", required=True)
    parser.add_argument("--betas", help="Comma-separated beta grid, e.g. 0.1,0.05,0.02")
    parser.add_argument("--out", required=True, help="Output CSV path")
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
        betas=args.betas,
    )
    points = heat_sweep(spec, pert, config.betas)
    write_heat(points, args.out, config.echo())
    return 0
