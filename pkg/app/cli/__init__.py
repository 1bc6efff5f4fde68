"""Command-line interface: `seba <command> [flags]`."""
