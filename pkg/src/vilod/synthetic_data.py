"""Seeded synthetic dataset builder for desk-scale end-to-end runs.

Produces an in-memory registry, class-clustered embeddings, and hidden ground
truth; embeddings of images sharing a class cluster together so the diversity
seeding and exploration policies have real structure to find.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset_io import TEST, TRAIN_POOL, VALIDATION, DatasetRegistry, GroundTruthBox, ImageRecord
from .projection import EMBEDDING_DIM


@dataclass
class SyntheticDataset:
    registry: DatasetRegistry
    embeddings: dict[str, np.ndarray]  # pool images only
    ground_truth_map: dict[str, list[GroundTruthBox]]

    def ground_truth(self, image_id: str) -> list[GroundTruthBox]:
        return self.ground_truth_map.get(image_id, [])


def make_synthetic_dataset(
    n_pool: int = 200,
    n_val: int = 30,
    n_test: int = 40,
    num_classes: int = 4,
    seed: int = 0,
    embedding_dim: int = EMBEDDING_DIM,
    boxes_per_image: tuple[int, int] = (1, 3),
) -> SyntheticDataset:
    rng = np.random.default_rng(seed)
    classes = [f"class_{c}" for c in range(num_classes)]
    registry = DatasetRegistry(classes=classes)
    # one embedding-space center per class; pool images cluster around their
    # dominant class center
    centers = rng.normal(0, 1, size=(num_classes, embedding_dim)) * 6.0

    embeddings: dict[str, np.ndarray] = {}
    gt: dict[str, list[GroundTruthBox]] = {}

    def add_images(prefix: str, split: str, count: int, with_embedding: bool):
        for i in range(count):
            image_id = f"{prefix}_{i:04d}"
            registry.add(
                ImageRecord(image_id=image_id, split=split, width=640, height=480)
            )
            dominant = int(rng.integers(num_classes))
            n_boxes = int(rng.integers(boxes_per_image[0], boxes_per_image[1] + 1))
            boxes = []
            for b in range(n_boxes):
                class_id = dominant if b == 0 else int(rng.integers(num_classes))
                w = float(rng.uniform(0.1, 0.4))
                h = float(rng.uniform(0.1, 0.4))
                cx = float(rng.uniform(w / 2, 1 - w / 2))
                cy = float(rng.uniform(h / 2, 1 - h / 2))
                boxes.append(GroundTruthBox(class_id, cx, cy, w, h))
            gt[image_id] = boxes
            if with_embedding:
                embeddings[image_id] = centers[dominant] + rng.normal(
                    0, 1, size=embedding_dim
                )

    add_images("pool", TRAIN_POOL, n_pool, with_embedding=True)
    add_images("val", VALIDATION, n_val, with_embedding=False)
    add_images("test", TEST, n_test, with_embedding=False)
    return SyntheticDataset(registry=registry, embeddings=embeddings, ground_truth_map=gt)
