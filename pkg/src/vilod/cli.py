"""Command line entry points: `simulate` runs an automated strategy loop,
`serve` exposes a session over HTTP for the UI.

Config files are flat `key = value` lines mirroring SessionConfig, e.g.::

    budget_per_iteration = 30
    total_iterations = 5
    seed = 0
    epochs = 50
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .dataset_io import load_dataset_manifest
from .detector import SyntheticDetector, SyntheticSkillConfig, TrainConfig
from .evaluation import trajectory_csv_rows
from .synthetic_data import make_synthetic_dataset
from .workflow import SelectionPolicy, SessionConfig, run_scripted_strategy

STRATEGY_KINDS = {
    "baseline": "uncertainty_baseline",
    "exploration": "exploration",
    "uncertainty": "uncertainty_filtered",
    "balanced": "balanced",
    "replay": "replay",
}


def load_config_file(path: Path | str) -> SessionConfig:
    values: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    def get_int(key: str, default: int) -> int:
        return int(values.get(key, default))

    suggestion = values.get("suggestion_count")
    return SessionConfig(
        budget_per_iteration=get_int("budget_per_iteration", 30),
        total_iterations=get_int("total_iterations", 5),
        suggestion_count=int(suggestion) if suggestion else None,
        seed=get_int("seed", 0),
        train_config=TrainConfig(
            epochs=get_int("epochs", 50),
            image_size=get_int("image_size", 640),
            seed=get_int("train_seed", 42),
        ),
        seed_pool_k=get_int("seed_pool_k", 20),
        seed_pool_per_centroid=get_int("seed_pool_per_centroid", 2),
    )


def load_embeddings(matrix_path: Path, ids_path: Path) -> dict[str, np.ndarray]:
    ids = [ln.strip() for ln in ids_path.read_text().splitlines() if ln.strip()]
    if matrix_path.suffix == ".npy":
        matrix = np.load(matrix_path)
    else:
        matrix = np.loadtxt(matrix_path)
    if matrix.shape[0] != len(ids):
        raise SystemExit(
            f"embedding rows ({matrix.shape[0]}) != id count ({len(ids)})"
        )
    return {image_id: matrix[i] for i, image_id in enumerate(ids)}


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config_file(args.config) if args.config else SessionConfig()

    if args.data_root:
        registry = load_dataset_manifest(args.data_root)
        if not (args.embeddings and args.ids):
            raise SystemExit("--embeddings and --ids are required with --data-root")
        embeddings = load_embeddings(Path(args.embeddings), Path(args.ids))
        ground_truth = registry.load_ground_truth
    else:
        dataset = make_synthetic_dataset(
            n_pool=args.synthetic_pool, seed=config.seed
        )
        registry = dataset.registry
        embeddings = dataset.embeddings
        ground_truth = dataset.ground_truth

    detector = SyntheticDetector(
        ground_truth=ground_truth,
        num_classes=len(registry.classes),
        skill_config=SyntheticSkillConfig(seed=config.seed),
    )

    kind = STRATEGY_KINDS[args.strategy]
    replay_ids = None
    if kind == "replay":
        if not args.replay_file:
            raise SystemExit("--replay-file is required for the replay strategy")
        replay_ids = [
            ln.strip() for ln in Path(args.replay_file).read_text().splitlines() if ln.strip()
        ]
    policy = SelectionPolicy(kind=kind, replay_ids=replay_ids)

    trajectory, _ = run_scripted_strategy(
        policy, config, registry, embeddings, detector, ground_truth=ground_truth
    )
    rows = trajectory_csv_rows(args.strategy, trajectory)
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"wrote {len(trajectory)}-point trajectory to {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app
    from .workflow import Session

    config = load_config_file(args.config) if args.config else SessionConfig()
    dataset = make_synthetic_dataset(n_pool=args.synthetic_pool, seed=config.seed)
    detector = SyntheticDetector(
        ground_truth=dataset.ground_truth,
        num_classes=len(dataset.registry.classes),
        skill_config=SyntheticSkillConfig(seed=config.seed),
    )
    from .projection import tsne_project

    pool_embeddings = {
        i: dataset.embeddings[i] for i in sorted(dataset.registry.pool_ids())
    }
    projection = tsne_project(
        pool_embeddings, seed=config.seed, iterations=args.tsne_iterations
    )
    session = Session(
        config,
        dataset.registry,
        dataset.embeddings,
        detector,
        ground_truth=dataset.ground_truth,
        projection_points=projection.points,
    )
    session.start()
    app = create_app(session, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vilod")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an automated selection strategy")
    sim.add_argument("--strategy", choices=sorted(STRATEGY_KINDS), required=True)
    sim.add_argument("--config", help="flat key=value config file")
    sim.add_argument("--out", default="trajectory.csv")
    sim.add_argument("--replay-file", help="id list for the replay strategy")
    sim.add_argument("--data-root", help="YOLO-layout dataset root")
    sim.add_argument("--embeddings", help="embedding matrix (.npy or text)")
    sim.add_argument("--ids", help="id list paired with the embedding matrix")
    sim.add_argument("--synthetic-pool", type=int, default=200,
                     help="pool size when no --data-root is given")
    sim.set_defaults(func=cmd_simulate)

    serve = sub.add_parser("serve", help="serve a demo session over HTTP")
    serve.add_argument("--config", help="flat key=value config file")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--token", default=None)
    serve.add_argument("--synthetic-pool", type=int, default=200)
    serve.add_argument("--tsne-iterations", type=int, default=500)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
