"""
`seba solve`: solve the secular equation for every gap up to x_max.
"""

import argparse

from app.cli.common import add_config_flag, load_config
from app.models.spectrum import ScattererPhase
from app.services.secular import solve_spectrum
from app.services.spectrum_store import read_norms, write_perturbed


def register(subparsers) -> None:
    parser = subparsers.add_parser("solve", help="Solve for the perturbed spectrum")
    add_config_flag(parser)
    parser.add_argument("--norms", required=True, help="Norms CSV from `seba norms`")
    parser.add_argument("--phi", type=float, help="Scatterer phase in (-pi, pi)")
    parser.add_argument("--tol", type=float, help="Root residual tolerance (>= 1e-13)")
    parser.add_argument("--xmax", type=float, help="Largest norm paired with a root (default cutoff/2)")
    parser.add_argument("--tail", choices=["analytic", "none"], help="Continuation past the cutoff")
    parser.add_argument("--eps-eval", type=float, help="Accuracy budget of the fast evaluator")
    parser.add_argument("--workers", type=int, help="Processes used for the gap solves")
    parser.add_argument("--out", required=True, help="Output CSV path")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    spec = read_norms(args.norms)
    config = load_config(
        args,
        dim=spec.form.dim,
        coeffs=spec.form.label(),
        cutoff=spec.cutoff,
        merge_tol=spec.merge_tol,
        phi=args.phi,
        tol=args.tol,
        x_max=args.xmax,
        tail=args.tail,
        eps_eval=args.eps_eval,
        workers=args.workers,
    )
    pert = solve_spectrum(
        spec,
        ScattererPhase(config.phi),
        x_max=config.x_max,
        tol=config.tol,
        tail=config.tail,
        eps_eval=config.eps_eval,
        workers=config.workers,
    )
    write_perturbed(pert, args.out)
    return 0
