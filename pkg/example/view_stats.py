#!/usr/bin/env python3
"""
View statistics from the example result stores.
"""

import json
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from brwlab import ResultStore

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")


def view_experiment(name):
    """Print the stored reports and stop reasons of one example run."""
    db_path = os.path.join(OUT, name, "results.db")
    if not os.path.exists(db_path):
        print(f"❌ {db_path} not found. Run generate_examples.py first.")
        return

    with open(os.path.join(OUT, name, "manifest.json")) as fh:
        manifest = json.load(fh)
    store = ResultStore(db_path)

    print("\n" + "=" * 60)
    print(f"{name}  (seed {manifest['seed']}, config {manifest['config_sha256'][:12]})")
    print("=" * 60)
    prefix = manifest["config_sha256"]
    for i, task in enumerate(manifest["config"]["tasks"]):
        task_name = task if isinstance(task, str) else task["task"]
        experiment = f"{prefix}/{i}"
        for report in store.reports(experiment, task_name):
            keys = ", ".join(sorted(report)[:6])
            print(f"  {task_name:15s} {keys}")
        counts = store.stop_reason_counts(experiment)
        if counts:
            total = sum(counts.values())
            for reason, count in sorted(counts.items()):
                print(f"    {reason:15s} {count:6d}  ({100.0 * count / total:.1f}%)")
    store.close()


def main():
    if not os.path.isdir(OUT):
        print("❌ No outputs found. Run generate_examples.py first.")
        return
    for name in sorted(os.listdir(OUT)):
        view_experiment(name)


if __name__ == "__main__":
    main()
