"""
ReadingTrace - headless eye-tracking reading data

Stores reading events in a DiMe-style store, turns notification traces and
fixation streams into ReadingEvents, resolves peyedf:// URLs and runs the
answer-prediction experiment. See `python main.py --help`.
"""

import sys
import os

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cli.app import main


if __name__ == "__main__":
    sys.exit(main())
