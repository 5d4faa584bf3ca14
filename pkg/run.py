#!/usr/bin/env python3
"""
Runner script for pirlab.
Equivalent to ``python -m pirlab``; see ``pirlab/cli.py`` for the commands.

Examples:
    python run.py capacity 3 3
    python run.py plan 2 2 1 --symbolic
    python run.py verify --scheme capacity -K 4 -N 3 --privacy structural --correctness --trials 50
"""

import sys

from pirlab.cli import main


if __name__ == "__main__":
    sys.exit(main())
