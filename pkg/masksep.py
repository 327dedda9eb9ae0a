#!/usr/bin/env python3
"""Launcher: python masksep.py <subcommand> [options]."""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
