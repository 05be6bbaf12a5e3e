#!/usr/bin/env python3
"""Reproduce the desk-scale benchmark table and learning curves.

For each dataset CSV in data/ (see scripts/fetch_datasets.py): run 5 seeded
federations with 10 collaborators, 300 rounds, 10-leaf trees; report mean
final macro-F1 +- std and write per-round curves to results/.

Run: python scripts/run_benchmarks.py [--rounds 300] [--seeds 5] [--out results]
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fedboost.data import ingest_csv
from fedboost.plan import plan_from_dict
from fedboost.simulate import simulate

DATASETS = ["kr_vs_kp.csv", "splice.csv", "vehicle.csv"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--out", default="results")
    parser.add_argument("--collaborators", type=int, default=10)
    parser.add_argument("--rounds", type=int, default=300)
    parser.add_argument("--seeds", type=int, default=5)
    args = parser.parse_args()

    data_dir = Path(args.data_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    for name in DATASETS:
        path = data_dir / name
        if not path.exists():
            print(f"skipping {name}: not found (run scripts/fetch_datasets.py)")
            continue
        shard = ingest_csv(path)
        finals = []
        curves = {}
        started = time.perf_counter()
        for seed in range(args.seeds):
            plan = plan_from_dict({
                "federation": {
                    "collaborators": args.collaborators,
                    "rounds": args.rounds,
                    "seed": seed,
                    "learner": {"family": "tree", "hyperparameters": {"max_leaves": 10}},
                },
                "protocol": {"poll_interval": 0.001},
            })
            report = simulate(plan, shard, seed=seed, collect_events=False)
            finals.append(report.final_f1)
            curves[seed] = report.f1_curve
            print(f"  {name} seed {seed}: final f1 {report.final_f1:.4f}")
        elapsed = time.perf_counter() - started
        mean = statistics.mean(finals)
        std = statistics.stdev(finals) if len(finals) > 1 else 0.0
        print(f"{name}: mean f1 {mean:.4f} +- {std:.4f} over {len(finals)} seeds "
              f"({elapsed/60:.1f} min)")
        with open(out_dir / f"{path.stem}_curves.json", "w") as f:
            json.dump({"dataset": name, "finals": finals,
                       "mean": mean, "std": std,
                       "curves": {s: c for s, c in curves.items()}}, f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
