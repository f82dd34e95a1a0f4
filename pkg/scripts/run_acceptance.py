"""Run the acceptance checks and print one PASS/FAIL line per criterion.

Usage: python scripts/run_acceptance.py [extra pytest args]

Takes roughly ten minutes on one core; criteria 2, 3 and 7 need data/mnist.
"""

import sys
from pathlib import Path

import pytest

if __name__ == "__main__":
    test_file = Path(__file__).resolve().parents[1] / "tests" / "test_acceptance.py"
    sys.exit(pytest.main(["-q", "-p", "no:cacheprovider", str(test_file), *sys.argv[1:]]))
