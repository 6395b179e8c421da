#!/usr/bin/env python3
"""Project a synthetic pool to 2-D, weight each point by squared model
uncertainty, and export the projection plus the density heatmap as CSV."""

import argparse
from pathlib import Path

from vilod.detector import SyntheticDetector, SyntheticSkillConfig
from vilod.projection import export_projection_csv, tsne_project
from vilod.synthetic_data import make_synthetic_dataset
from vilod.uncertainty import (
    average_confidence,
    compute_heatmap,
    heatmap_to_csv,
    uncertainty_weight,
)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--pool", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--perplexity", type=float, default=12.0)
    parser.add_argument("--iterations", type=int, default=500)
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    args = parser.parse_args()

    dataset = make_synthetic_dataset(n_pool=args.pool, n_val=10, n_test=10, seed=args.seed)
    pool_ids = sorted(dataset.registry.pool_ids())
    embeddings = {i: dataset.embeddings[i] for i in pool_ids}
    result = tsne_project(
        embeddings, perplexity=args.perplexity, seed=args.seed, iterations=args.iterations
    )
    print(f"projected {len(result.points)} points; final KL={result.kl_trace[-1]:.4f}")

    detector = SyntheticDetector(
        ground_truth=dataset.ground_truth,
        num_classes=len(dataset.registry.classes),
        skill_config=SyntheticSkillConfig(seed=args.seed),
    )
    detections = detector.infer(0, pool_ids)
    conf_map: dict[str, list[float]] = {i: [] for i in pool_ids}
    for d in detections:
        conf_map[d.image_id].append(d.confidence)
    weights = [
        uncertainty_weight(average_confidence(conf_map[p.image_id]))
        for p in result.points
    ]
    grid = compute_heatmap(result.points, weights)

    projection_path = args.out_dir / "projection.csv"
    heatmap_path = args.out_dir / "heatmap.csv"
    projection_path.write_text(export_projection_csv(result.points))
    heatmap_path.write_text(heatmap_to_csv(grid))
    print(f"wrote {projection_path} and {heatmap_path}")


if __name__ == "__main__":
    main()
