"""Durable storage: the five-entity schema, label write-through, snapshots.

The store is an embedded SQLite file (`vilod.db`) plus a per-user run folder::

    runs/<user>/labels/*.txt     YOLO write-through of that user's annotations
    runs/<user>/session.snap     JSON snapshot of the session state
    runs/<user>/trajectory.csv   evaluation trajectory export
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import time
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .dataset_io import TRAIN_POOL, GroundTruthBox, serialize_yolo_label
from .detector import Detection, ModelVersion, TrainConfig
from .evaluation import EvalReport, trajectory_csv_rows
from .workflow import IterationState, NotSelectable

_SCHEMA = """
CREATE TABLE IF NOT EXISTS user (
    user_id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    token_hash TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS image (
    image_id TEXT PRIMARY KEY,
    split TEXT NOT NULL,
    width INTEGER,
    height INTEGER
);
CREATE TABLE IF NOT EXISTS model (
    version INTEGER PRIMARY KEY,
    user_id TEXT REFERENCES user(user_id),
    parent INTEGER REFERENCES model(version),
    weights_ref TEXT NOT NULL,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS annotation (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id TEXT NOT NULL REFERENCES user(user_id),
    image_id TEXT NOT NULL REFERENCES image(image_id),
    iteration INTEGER NOT NULL,
    -- class_id NULL marks an image annotated as containing no objects
    class_id INTEGER,
    cx REAL, cy REAL, w REAL, h REAL
);
CREATE TABLE IF NOT EXISTS detection (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    model_version INTEGER NOT NULL REFERENCES model(version),
    image_id TEXT NOT NULL REFERENCES image(image_id),
    class_id INTEGER NOT NULL,
    cx REAL NOT NULL, cy REAL NOT NULL, w REAL NOT NULL, h REAL NOT NULL,
    confidence REAL NOT NULL
);
"""


class PersistenceError(Exception):
    pass


class UnknownModel(PersistenceError):
    pass


class UnknownImage(PersistenceError):
    pass


class NoSnapshot(PersistenceError):
    pass


def _token_hash(token: str) -> str:
    return hashlib.sha256(token.encode()).hexdigest()


class EntityStore:
    """SQLite-backed store for the User/Image/Model/Annotation/Detection schema."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.db_path = self.root / "vilod.db"
        self._conn = sqlite3.connect(self.db_path, check_same_thread=False)
        self._conn.execute("PRAGMA foreign_keys = ON")
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    # -- users / images / models ------------------------------------------

    def add_user(self, user_id: str, name: str, token: str) -> None:
        with self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO user VALUES (?, ?, ?)",
                (user_id, name, _token_hash(token)),
            )

    def check_token(self, user_id: str, token: str) -> bool:
        row = self._conn.execute(
            "SELECT token_hash FROM user WHERE user_id = ?", (user_id,)
        ).fetchone()
        return row is not None and row[0] == _token_hash(token)

    def add_image(self, image_id: str, split: str, width=None, height=None) -> None:
        with self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO image VALUES (?, ?, ?, ?)",
                (image_id, split, width, height),
            )

    def image_split(self, image_id: str) -> Optional[str]:
        row = self._conn.execute(
            "SELECT split FROM image WHERE image_id = ?", (image_id,)
        ).fetchone()
        return row[0] if row else None

    def add_model(self, model: ModelVersion, user_id: Optional[str] = None) -> None:
        with self._conn:
            self._conn.execute(
                "INSERT OR REPLACE INTO model VALUES (?, ?, ?, ?, ?)",
                (model.version, user_id, model.parent, model.weights_ref, model.created_at),
            )

    def has_model(self, version: int) -> bool:
        return (
            self._conn.execute(
                "SELECT 1 FROM model WHERE version = ?", (version,)
            ).fetchone()
            is not None
        )

    # -- detections -----------------------------------------------------------

    def record_detections(self, model_version: int, detections: Sequence[Detection]) -> int:
        """Atomically replace all stored detections for one model version."""
        if not self.has_model(model_version):
            raise UnknownModel(str(model_version))
        for d in detections:
            if self.image_split(d.image_id) is None:
                raise UnknownImage(d.image_id)
        with self._conn:
            self._conn.execute(
                "DELETE FROM detection WHERE model_version = ?", (model_version,)
            )
            self._conn.executemany(
                "INSERT INTO detection (model_version, image_id, class_id, cx, cy, w, h, confidence)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                [
                    (model_version, d.image_id, d.class_id, d.cx, d.cy, d.w, d.h, d.confidence)
                    for d in detections
                ],
            )
        return len(detections)

    def detections_for_model(self, model_version: int) -> list[Detection]:
        rows = self._conn.execute(
            "SELECT image_id, class_id, cx, cy, w, h, confidence FROM detection"
            " WHERE model_version = ? ORDER BY id",
            (model_version,),
        ).fetchall()
        return [
            Detection(r[0], r[1], r[2], r[3], r[4], r[5], r[6], model_version)
            for r in rows
        ]

    # -- annotations with label write-through --------------------------------

    def _labels_dir(self, user_id: str) -> Path:
        path = self.root / "runs" / user_id / "labels"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def record_annotation(
        self, user_id: str, image_id: str, iteration: int, boxes: Sequence[GroundTruthBox]
    ) -> list[int]:
        split = self.image_split(image_id)
        if split is None:
            raise UnknownImage(image_id)
        if split != TRAIN_POOL:
            raise NotSelectable(image_id)
        ids = []
        with self._conn:
            self._conn.execute(
                "DELETE FROM annotation WHERE user_id = ? AND image_id = ?",
                (user_id, image_id),
            )
            rows = [
                (user_id, image_id, iteration, b.class_id, b.cx, b.cy, b.w, b.h)
                for b in boxes
            ]
            if not rows:  # negative example: image confirmed object-free
                rows = [(user_id, image_id, iteration, None, None, None, None, None)]
            for row in rows:
                cur = self._conn.execute(
                    "INSERT INTO annotation (user_id, image_id, iteration, class_id, cx, cy, w, h)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    row,
                )
                ids.append(cur.lastrowid)
        label_file = self._labels_dir(user_id) / f"{image_id}.txt"
        label_file.write_text(serialize_yolo_label(boxes))
        return ids

    def delete_annotation(self, user_id: str, image_id: str) -> int:
        with self._conn:
            cur = self._conn.execute(
                "DELETE FROM annotation WHERE user_id = ? AND image_id = ?",
                (user_id, image_id),
            )
        label_file = self._labels_dir(user_id) / f"{image_id}.txt"
        if label_file.exists():
            label_file.unlink()
        return cur.rowcount

    def annotations_for_user(self, user_id: str) -> dict[str, list[GroundTruthBox]]:
        rows = self._conn.execute(
            "SELECT image_id, class_id, cx, cy, w, h FROM annotation"
            " WHERE user_id = ? ORDER BY id",
            (user_id,),
        ).fetchall()
        out: dict[str, list[GroundTruthBox]] = {}
        for image_id, class_id, cx, cy, w, h in rows:
            out.setdefault(image_id, [])
            if class_id is not None:
                out[image_id].append(GroundTruthBox(class_id, cx, cy, w, h))
        return out

    # -- session snapshots -----------------------------------------------------

    def _snapshot_path(self, user_id: str) -> Path:
        path = self.root / "runs" / user_id
        path.mkdir(parents=True, exist_ok=True)
        return path / "session.snap"

    def snapshot_session(self, user_id: str, state: IterationState) -> None:
        self._snapshot_path(user_id).write_text(json.dumps(state_to_dict(state)))

    def restore_session(self, user_id: str) -> IterationState:
        path = self._snapshot_path(user_id)
        if not path.exists():
            raise NoSnapshot(user_id)
        return state_from_dict(json.loads(path.read_text()))

    def write_trajectory(
        self, user_id: str, strategy: str, trajectory: Sequence[EvalReport]
    ) -> Path:
        path = self.root / "runs" / user_id
        path.mkdir(parents=True, exist_ok=True)
        out = path / "trajectory.csv"
        out.write_text("\n".join(trajectory_csv_rows(strategy, trajectory)) + "\n")
        return out


def _boxes_to_json(boxes: Iterable[GroundTruthBox]) -> list[list[float]]:
    return [[b.class_id, b.cx, b.cy, b.w, b.h] for b in boxes]


def _boxes_from_json(rows: Iterable[Sequence[float]]) -> list[GroundTruthBox]:
    return [GroundTruthBox(int(c), cx, cy, w, h) for c, cx, cy, w, h in rows]


def state_to_dict(state: IterationState) -> dict:
    model = state.current_model
    return {
        "iteration": state.iteration,
        "phase": state.phase,
        "labeled_ids": sorted(state.labeled_ids),
        "pending": {i: _boxes_to_json(b) for i, b in state.pending.items()},
        "current_model": {
            "version": model.version,
            "parent": model.parent,
            "weights_ref": model.weights_ref,
            "train_config": {
                "epochs": model.train_config.epochs,
                "image_size": model.train_config.image_size,
                "seed": model.train_config.seed,
            },
            "created_at": model.created_at,
        },
        "suggestions": list(state.suggestions),
        "trajectory": [r.to_dict() for r in state.trajectory],
        "annotations": {
            i: {"iteration": it, "boxes": _boxes_to_json(b)}
            for i, (it, b) in state.annotations.items()
        },
        "faults": list(state.faults),
    }


def state_from_dict(d: dict) -> IterationState:
    m = d["current_model"]
    model = ModelVersion(
        version=m["version"],
        parent=m["parent"],
        weights_ref=m["weights_ref"],
        train_config=TrainConfig(
            epochs=m["train_config"]["epochs"],
            image_size=m["train_config"]["image_size"],
            seed=m["train_config"]["seed"],
        ),
        created_at=m["created_at"],
    )
    return IterationState(
        iteration=d["iteration"],
        phase=d["phase"],
        labeled_ids=set(d["labeled_ids"]),
        pending={i: _boxes_from_json(b) for i, b in d["pending"].items()},
        current_model=model,
        suggestions=list(d["suggestions"]),
        trajectory=[EvalReport.from_dict(r) for r in d["trajectory"]],
        annotations={
            i: (entry["iteration"], _boxes_from_json(entry["boxes"]))
            for i, entry in d["annotations"].items()
        },
        faults=list(d["faults"]),
    )
