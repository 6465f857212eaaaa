#!/usr/bin/env python3
"""
Write example experiment configs and run them.
The outputs are created for demonstration and testing purposes.
"""

import json
import os
import shutil
import sys

# Add parent directory to path to import our modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from brwlab.cli import load_config, run_experiment

HERE = os.path.dirname(os.path.abspath(__file__))

CONFIGS = {
    "gw": {
        "name": "gw",
        "model": {"example": "galton-watson"},
        "settings": {"trials": 2000, "horizon": 60, "cap": 2000, "seed": 1},
        "tasks": ["validate", "extinction", "series", "simulate"],
    },
    "two-type": {
        "name": "two-type",
        "model": {"example": "two-type-bp"},
        "settings": {"A": [1]},
        "tasks": ["extinction", "never-hit", {"task": "classify-local", "N": 20}],
    },
    "tree": {
        "name": "tree",
        "model": {"example": "tree", "params": {"d": 3, "lam": 0.4}},
        "settings": {"trials": 200, "horizon": 14, "cap": 50000, "seed": 3, "N": 8},
        "tasks": ["classify-local", "classify-global", {"task": "sweep", "levels": [1, 2, 4, "inf"]}],
    },
    "strip": {
        "name": "strip",
        "model": {"example": "strip"},
        "settings": {"trials": 300, "horizon": 16, "cap": 200000, "seed": 5, "x": [0, 0],
                     "A": [[0, 1]], "mode": "local", "N": 12},
        "tasks": ["classify-local", "simulate"],
    },
}


def generate(name, data):
    """Write one config and run it into ``out/<name>``."""
    path = os.path.join(HERE, f"{name}.json")
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
    out = os.path.join(HERE, "out", name)
    if os.path.exists(out):
        shutil.rmtree(out)
    status = run_experiment(load_config(path, out))
    print(f"  {name:10s} -> {out} (exit {status})")
    return status


def main():
    print("brwlab example experiments")
    print("=" * 50)
    failures = sum(1 for name, data in CONFIGS.items() if generate(name, data) != 0)
    print(f"\n{len(CONFIGS) - failures} of {len(CONFIGS)} experiments finished")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
