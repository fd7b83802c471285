#!/usr/bin/env python3
"""
Entry point: python msfa_forge.py [--threads N] [--log-level LEVEL] <command> [options]
Run with --help for the command list.
"""

import sys

from cli.main import main

if __name__ == "__main__":
    sys.exit(main())
