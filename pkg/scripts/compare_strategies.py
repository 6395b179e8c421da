#!/usr/bin/env python3
"""Run every automated selection strategy on the same synthetic pool and write
one combined trajectory CSV for side-by-side comparison."""

import argparse
from pathlib import Path

from vilod.detector import SyntheticDetector, SyntheticSkillConfig, TrainConfig
from vilod.evaluation import trajectory_csv_rows
from vilod.synthetic_data import make_synthetic_dataset
from vilod.workflow import SelectionPolicy, SessionConfig, run_scripted_strategy

STRATEGIES = {
    "baseline": SelectionPolicy(kind="uncertainty_baseline"),
    "exploration": SelectionPolicy(kind="exploration"),
    "uncertainty_filtered": SelectionPolicy(
        kind="uncertainty_filtered", quality_filter=lambda image_id: True
    ),
    "balanced": SelectionPolicy(kind="balanced"),
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pool", type=int, default=600)
    parser.add_argument("--budget", type=int, default=30)
    parser.add_argument("--iterations", type=int, default=5)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", type=Path, default=Path("strategy_comparison.csv"))
    args = parser.parse_args()

    dataset = make_synthetic_dataset(n_pool=args.pool, n_val=60, n_test=80, seed=args.seed)
    config = SessionConfig(
        budget_per_iteration=args.budget,
        total_iterations=args.iterations,
        seed=args.seed,
        train_config=TrainConfig(seed=args.seed),
    )

    rows: list[str] = []
    for name, policy in STRATEGIES.items():
        detector = SyntheticDetector(
            ground_truth=dataset.ground_truth,
            num_classes=len(dataset.registry.classes),
            skill_config=SyntheticSkillConfig(seed=args.seed),
        )
        trajectory, _ = run_scripted_strategy(
            policy, config, dataset.registry, dataset.embeddings, detector,
            ground_truth=dataset.ground_truth,
        )
        strategy_rows = trajectory_csv_rows(name, trajectory)
        rows.extend(strategy_rows if not rows else strategy_rows[1:])
        print(f"{name:22s} final mAP50={trajectory[-1].map50:.4f} "
              f"mAP50-95={trajectory[-1].map50_95:.4f}")

    args.out.write_text("\n".join(rows) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
