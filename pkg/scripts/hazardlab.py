"""run example:
python3 scripts/hazardlab.py verify --config configs/two_state_chain.json --seed 42 --out results
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.functions.cli.commands import main  # noqa: E402


if __name__ == "__main__":
    exit(main())
