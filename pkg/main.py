#!/usr/bin/env python3
"""
Interval Markets
Command-line entry point; see `python main.py --help`
"""

from interval_markets.cli import main

if __name__ == "__main__":
    main()
