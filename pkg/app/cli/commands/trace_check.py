"""
`seba trace-check`: both sides of the trace identity for one Gaussian.
"""

import argparse

from app.cli.common import add_config_flag, load_config, parse_sigma, write_report
from app.errors import UsageError
from app.models.spectrum import GaussianTest, ScattererPhase
from app.services.spectrum_store import read_norms, read_perturbed
from app.services.trace import trace_check


def register(subparsers) -> None:
    parser = subparsers.add_parser("trace-check", help="Compare spectral and contour sides of the trace identity")
    add_config_flag(parser)
    parser.add_argument("--dim", type=int, choices=[2, 3])
    parser.add_argument("--norms", required=True)
    parser.add_argument("--perturbed", required=True)
    parser.add_argument("--phi", type=float, help="Phase (default: the phase stored with the roots)")
    parser.add_argument("--beta", type=float)
    parser.add_argument("--sigma", type=parse_sigma, default=None, help="'auto' or a contour line Im rho = -sigma")
    parser.add_argument("--quad-tol", type=float)
    parser.add_argument("--out", required=True, help="Output JSON path")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    spec = read_norms(args.norms)
    pert = read_perturbed(args.perturbed)
    if args.dim is not None and args.dim != spec.form.dim:
        raise UsageError(f"--dim {args.dim} does not match the {spec.form.dim}D norms file")
    config = load_config(
        args,
        dim=spec.form.dim,
        coeffs=spec.form.label(),
        cutoff=spec.cutoff,
        x_max=pert.x_max,
        phi=args.phi if args.phi is not None else pert.phase.phi,
        beta=args.beta,
        sigma=args.sigma,
        quad_tol=args.quad_tol,
    )
    report = trace_check(
        spec,
        pert,
        ScattererPhase(config.phi),
        GaussianTest(config.beta),
        sigma=config.sigma,
        quad_tol=config.quad_tol,
        config=config.echo(),
    )
    write_report(report, args.out)
    return 0
