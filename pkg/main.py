"""
Entry point: `python main.py <command> [flags]`, same as the `seba` console script.
"""

from app.cli.parser import main

if __name__ == "__main__":
    main()
