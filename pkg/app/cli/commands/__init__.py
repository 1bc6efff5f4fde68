"""
Subcommand modules. Each exposes register(subparsers) and run(args) -> int.
"""

from app.cli.commands import greedy3, heat, norms, pipeline, solve, stats, trace_check

COMMANDS = [norms, solve, stats, heat, trace_check, greedy3, pipeline]
