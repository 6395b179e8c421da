"""Pluggable detector backend with a deterministic synthetic implementation.

The synthetic detector perturbs hidden ground truth according to a per-class
skill level that improves as more instances of the class get labeled. It lets
whole annotate/retrain/infer loops run in-process, seeded and reproducible,
with no neural network anywhere.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .dataset_io import GroundTruthBox


class DetectorError(Exception):
    pass


class BackendUnavailable(DetectorError):
    pass


class TrainingFailed(DetectorError):
    pass


class ConcurrentTraining(DetectorError):
    pass


class UnknownModel(DetectorError):
    pass


class UnknownClass(DetectorError):
    pass


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float
    model_version: int

    def box(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    image_size: int = 640
    seed: int = 42


@dataclass(frozen=True)
class ModelVersion:
    version: int
    parent: Optional[int]
    weights_ref: str
    train_config: TrainConfig
    created_at: float


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    map50: float
    map50_95: float
    box_loss: float
    class_loss: float


@dataclass(frozen=True)
class SyntheticSkillConfig:
    """Shape of the synthetic learning curve; all rates per labeled instance."""

    detect_a: float = 0.15  # logistic slope over labeled_count
    detect_b: float = -1.0  # logistic offset (prob at 0 labels)
    conf_floor: float = 0.15
    conf_ceiling: float = 0.95
    conf_halflife: float = 25.0  # labeled instances to close half the gap
    conf_spread: float = 0.05
    noise_base: float = 0.25  # localization sigma (box-size fraction) at 0 labels
    noise_halflife: float = 25.0
    detect_prob_override: Optional[float] = None  # pins detect_prob for tests
    seed: int = 0


@dataclass(frozen=True)
class SyntheticSkill:
    config: SyntheticSkillConfig
    labeled_count: dict[int, int]  # per class

    def detect_prob(self, class_id: int) -> float:
        cfg = self.config
        if cfg.detect_prob_override is not None:
            return cfg.detect_prob_override
        count = self.labeled_count.get(class_id, 0)
        return 1.0 / (1.0 + math.exp(-(cfg.detect_a * count + cfg.detect_b)))

    def confidence_mean(self, class_id: int) -> float:
        cfg = self.config
        count = self.labeled_count.get(class_id, 0)
        frac = count / (count + cfg.conf_halflife)
        return cfg.conf_floor + (cfg.conf_ceiling - cfg.conf_floor) * frac

    def localization_sigma(self, class_id: int) -> float:
        cfg = self.config
        count = self.labeled_count.get(class_id, 0)
        return cfg.noise_base * cfg.noise_halflife / (count + cfg.noise_halflife)


def synthetic_update_skill(
    skill: SyntheticSkill,
    labeled_annotations: Iterable[GroundTruthBox],
    num_classes: int,
) -> SyntheticSkill:
    """Fold newly labeled instances into the per-class counts."""
    counts = dict(skill.labeled_count)
    for box in labeled_annotations:
        if not (0 <= box.class_id < num_classes):
            raise UnknownClass(f"class {box.class_id} outside 0..{num_classes - 1}")
        counts[box.class_id] = counts.get(box.class_id, 0) + 1
    return replace(skill, labeled_count=counts)


class TrainingRun:
    """Iterate for the epoch metric stream; `.result` holds the new version."""

    def __init__(self, epochs: Iterator[EpochMetrics], finish: Callable[[], ModelVersion]):
        self._epochs = epochs
        self._finish = finish
        self.result: Optional[ModelVersion] = None

    def __iter__(self) -> Iterator[EpochMetrics]:
        for metrics in self._epochs:
            yield metrics
        self.result = self._finish()


def _stable_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _clamp_box(cx: float, cy: float, w: float, h: float) -> tuple[float, float, float, float]:
    w = min(max(w, 1e-6), 1.0)
    h = min(max(h, 1e-6), 1.0)
    cx = min(max(cx, w / 2), 1.0 - w / 2)
    cy = min(max(cy, h / 2), 1.0 - h / 2)
    return cx, cy, w, h


class SyntheticDetector:
    """In-process deterministic detector backend.

    Ground truth is supplied as a lookup (the simulation's hidden labels);
    inference emits per-box Bernoulli detections with skill-dependent noise.
    """

    def __init__(
        self,
        ground_truth: Callable[[str], list[GroundTruthBox]],
        num_classes: int,
        skill_config: SyntheticSkillConfig | None = None,
    ):
        self.ground_truth = ground_truth
        self.num_classes = num_classes
        config = skill_config or SyntheticSkillConfig()
        skill0 = SyntheticSkill(config=config, labeled_count={})
        self._skills: dict[int, SyntheticSkill] = {}
        self._versions: dict[int, ModelVersion] = {}
        self._lock = threading.Lock()
        self._training_active = False
        self._clock = 0.0
        self._register(parent=None, skill=skill0)

    def _register(self, parent: Optional[int], skill: SyntheticSkill) -> ModelVersion:
        version = len(self._versions)
        self._clock += 1.0
        mv = ModelVersion(
            version=version,
            parent=parent,
            weights_ref=f"synthetic://weights/{version}",
            train_config=TrainConfig(),
            created_at=self._clock,
        )
        self._versions[version] = mv
        self._skills[version] = skill
        return mv

    @property
    def versions(self) -> dict[int, ModelVersion]:
        return dict(self._versions)

    def model(self, version: int) -> ModelVersion:
        if version not in self._versions:
            raise UnknownModel(f"no model version {version}")
        return self._versions[version]

    def skill(self, version: int) -> SyntheticSkill:
        self.model(version)
        return self._skills[version]

    def train(
        self,
        parent: ModelVersion | int,
        labeled_manifest: Mapping[str, Sequence[GroundTruthBox]],
        config: TrainConfig = TrainConfig(),
    ) -> TrainingRun:
        parent_version = parent.version if isinstance(parent, ModelVersion) else parent
        self.model(parent_version)
        if not labeled_manifest:
            raise TrainingFailed("labeled manifest is empty")
        with self._lock:
            if self._training_active:
                raise ConcurrentTraining("a training job is already active")
            self._training_active = True

        new_skill = self._skills[parent_version]
        for boxes in labeled_manifest.values():
            new_skill = synthetic_update_skill(new_skill, boxes, self.num_classes)

        def epochs() -> Iterator[EpochMetrics]:
            rng = _stable_rng("train", config.seed, parent_version, len(labeled_manifest))
            total = sum(new_skill.labeled_count.values())
            ceiling = min(0.98, 0.3 + 0.7 * total / (total + 60.0))
            for epoch in range(1, config.epochs + 1):
                progress = epoch / config.epochs
                map50_95 = ceiling * (1 - math.exp(-3 * progress)) + rng.normal(0, 0.01)
                map50_95 = float(min(max(map50_95, 0.0), 1.0))
                map50 = float(min(1.0, map50_95 * 1.2))
                yield EpochMetrics(
                    epoch=epoch,
                    map50=map50,
                    map50_95=map50_95,
                    box_loss=float(max(0.01, 2.0 * math.exp(-2 * progress) + rng.normal(0, 0.02))),
                    class_loss=float(max(0.01, 1.5 * math.exp(-2 * progress) + rng.normal(0, 0.02))),
                )

        def finish() -> ModelVersion:
            with self._lock:
                self._training_active = False
            # best-epoch weights are what get registered as the child version
            return self._register(parent=parent_version, skill=new_skill)

        return TrainingRun(epochs(), finish)

    def abort_training(self) -> None:
        with self._lock:
            self._training_active = False

    def infer(self, model: ModelVersion | int, image_ids: Iterable[str]) -> list[Detection]:
        version = model.version if isinstance(model, ModelVersion) else model
        skill = self.skill(version)
        detections: list[Detection] = []
        for image_id in image_ids:
            rng = _stable_rng("infer", skill.config.seed, version, image_id)
            for box in self.ground_truth(image_id):
                if rng.random() >= skill.detect_prob(box.class_id):
                    continue
                sigma = skill.localization_sigma(box.class_id)
                cx = box.cx + rng.normal(0, sigma) * box.w
                cy = box.cy + rng.normal(0, sigma) * box.h
                w = box.w * (1 + rng.normal(0, sigma))
                h = box.h * (1 + rng.normal(0, sigma))
                cx, cy, w, h = _clamp_box(cx, cy, w, h)
                conf = skill.confidence_mean(box.class_id) + rng.normal(
                    0, skill.config.conf_spread
                )
                detections.append(
                    Detection(
                        image_id=image_id,
                        class_id=box.class_id,
                        cx=cx,
                        cy=cy,
                        w=w,
                        h=h,
                        confidence=float(min(max(conf, 0.0), 1.0)),
                        model_version=version,
                    )
                )
        return detections


# --- wire protocol (newline-delimited JSON) ---------------------------------


def encode_infer_request(model_version: int, image_ids: Sequence[str]) -> dict:
    return {"op": "infer", "model": model_version, "images": list(image_ids)}


def encode_infer_response_line(image_id: str, detections: Sequence[Detection]) -> dict:
    return {
        "image_id": image_id,
        "detections": [
            {"class": d.class_id, "box": [d.cx, d.cy, d.w, d.h], "conf": d.confidence}
            for d in detections
        ],
    }


def decode_infer_response_line(line: dict, model_version: int) -> list[Detection]:
    return [
        Detection(
            image_id=line["image_id"],
            class_id=d["class"],
            cx=d["box"][0],
            cy=d["box"][1],
            w=d["box"][2],
            h=d["box"][3],
            confidence=d["conf"],
            model_version=model_version,
        )
        for d in line["detections"]
    ]


def encode_train_request(parent: int, manifest_path: str, config: TrainConfig) -> dict:
    return {
        "op": "train",
        "parent": parent,
        "manifest_path": manifest_path,
        "config": {"epochs": config.epochs, "imgsz": config.image_size, "seed": config.seed},
    }


def encode_epoch_line(m: EpochMetrics) -> dict:
    return {
        "epoch": m.epoch,
        "map50": m.map50,
        "map50_95": m.map50_95,
        "box_loss": m.box_loss,
        "cls_loss": m.class_loss,
    }


def decode_epoch_line(line: dict) -> EpochMetrics:
    return EpochMetrics(
        epoch=line["epoch"],
        map50=line["map50"],
        map50_95=line["map50_95"],
        box_loss=line["box_loss"],
        class_loss=line["cls_loss"],
    )


def encode_done_line(version: int) -> dict:
    return {"done": True, "version": version}
