"""
main.py - cldeque entry point.
Stress, explore, validate and benchmark the Chase-Lev deque.
"""

import sys

from core.cli import main


if __name__ == "__main__":
    sys.exit(main())
