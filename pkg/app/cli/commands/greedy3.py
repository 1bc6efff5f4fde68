"""
`seba greedy3`: the three-step floor construction for 3D forms.

Prints CSV to stdout: one row for --target, a summary row for --random.
"""

import argparse

from app.cli.common import emit
from app.errors import UsageError
from app.models.lattice import DiagonalForm
from app.services.stats import greedy_approx_3d, greedy_bounds_check

TARGET_COLUMNS = "t,m,n,k,s1,s2,final"
RANDOM_COLUMNS = (
    "samples,seed,violations_s1,violations_s2,violations_final,max_ratio_s1,max_ratio_s2,max_ratio_final"
)


def register(subparsers) -> None:
    parser = subparsers.add_parser("greedy3", help="Greedy approximation by values of a 3D diagonal form")
    parser.add_argument("--coeffs", help="Three coefficients a,b,c (with --target)")
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--target", type=float, help="Value t to approximate from below")
    mode.add_argument("--random", type=int, metavar="N", help="Check the chained bounds on N random cases")
    parser.add_argument("--seed", type=int, default=0)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if args.target is not None:
        if not args.coeffs:
            raise UsageError("--target needs --coeffs a,b,c")
        step = greedy_approx_3d(DiagonalForm.parse(args.coeffs), args.target)
        values = [args.target, step.m, step.n, step.k, step.s1, step.s2, step.final]
        emit(TARGET_COLUMNS + "\n" + ",".join(format(v, ".17g") for v in values) + "\n")
        return 0

    check = greedy_bounds_check(args.random, args.seed)
    row = [
        check.samples, check.seed, check.violations_s1, check.violations_s2, check.violations_final,
        check.max_ratio_s1, check.max_ratio_s2, check.max_ratio_final,
    ]
    emit(RANDOM_COLUMNS + "\n" + ",".join(format(v, ".17g") for v in row) + "\n")
    return 0 if check.violations == 0 else 1
