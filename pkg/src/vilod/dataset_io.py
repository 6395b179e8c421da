"""Dataset registry: YOLO-format label parsing, split bookkeeping, validation.

Directory layout expected by :func:`load_dataset_manifest`::

    <root>/classes.txt              one class name per line, file order = class_id
    <root>/<split>/images/*.jpg     split in {train, val, test}
    <root>/<split>/labels/*.txt     one object per line: "class cx cy w h"

The train directory becomes the active-learning pool; val and test are fixed
and never selectable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

TRAIN_POOL = "train_pool"
VALIDATION = "validation"
TEST = "test"
SPLITS = (TRAIN_POOL, VALIDATION, TEST)

# directory name on disk -> canonical split name
_SPLIT_DIRS = {"train": TRAIN_POOL, "val": VALIDATION, "test": TEST}

_IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


class DatasetError(Exception):
    pass


class MalformedLine(DatasetError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed label line {line_no}: {detail}")


class OutOfRange(DatasetError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"label values out of range at line {line_no}: {detail}")


class MissingSplit(DatasetError):
    pass


class DuplicateImageId(DatasetError):
    pass


@dataclass(frozen=True)
class GroundTruthBox:
    """One labeled object: class index plus a center-format box in unit coords."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)


@dataclass
class ImageRecord:
    image_id: str
    split: str
    width: Optional[int] = None
    height: Optional[int] = None
    image_path: Optional[Path] = None
    label_path: Optional[Path] = None
    embedding_ref: Optional[str] = None
    # "unlabeled" | "seed" | "labeled"; labeled_iteration set only for "labeled"
    label_status: str = "unlabeled"
    labeled_iteration: Optional[int] = None


@dataclass
class DatasetRegistry:
    classes: list[str]
    images: dict[str, ImageRecord] = field(default_factory=dict)

    def split_ids(self, split: str) -> list[str]:
        return [r.image_id for r in self.images.values() if r.split == split]

    def pool_ids(self) -> list[str]:
        return self.split_ids(TRAIN_POOL)

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in SPLITS}
        for rec in self.images.values():
            out[rec.split] += 1
        return out

    def add(self, record: ImageRecord) -> None:
        if record.image_id in self.images:
            raise DuplicateImageId(record.image_id)
        self.images[record.image_id] = record

    def load_ground_truth(self, image_id: str) -> list[GroundTruthBox]:
        """Read the on-disk label file for an image; absent file means no objects."""
        rec = self.images[image_id]
        if rec.label_path is None or not rec.label_path.exists():
            return []
        return parse_yolo_label(rec.label_path.read_text())


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def parse_yolo_label(text: str) -> list[GroundTruthBox]:
    """Parse YOLO label-file contents; one box per non-empty line, order kept.

    Values are taken as written (no clamping); out-of-range coordinates raise
    rather than being silently repaired.
    """
    boxes: list[GroundTruthBox] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 5:
            raise MalformedLine(line_no, f"expected 5 tokens, got {len(tokens)}")
        try:
            class_id = int(tokens[0])
            cx, cy, w, h = (float(t) for t in tokens[1:])
        except ValueError as exc:
            raise MalformedLine(line_no, str(exc)) from None
        if class_id < 0:
            raise OutOfRange(line_no, f"class_id {class_id} < 0")
        if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
            raise OutOfRange(line_no, f"center ({cx}, {cy}) outside [0,1]")
        if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
            raise OutOfRange(line_no, f"size ({w}, {h}) outside (0,1]")
        boxes.append(GroundTruthBox(class_id, cx, cy, w, h))
    return boxes


def serialize_yolo_label(boxes: Iterable[GroundTruthBox]) -> str:
    """Serialize boxes to YOLO text, 6 decimal places per coordinate."""
    return "\n".join(
        f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}" for b in boxes
    )


def _image_dims(path: Path) -> tuple[Optional[int], Optional[int]]:
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - Pillow is an optional convenience
        return None, None
    try:
        with Image.open(path) as im:
            return im.size
    except Exception:
        return None, None


def load_dataset_manifest(root: Path | str, read_dims: bool = True) -> DatasetRegistry:
    """Build a registry from the on-disk layout; splits must all be present.

    Pool images without a label file are legal (labels stay hidden until a
    human annotates them); missing val/test labels surface later through
    :func:`validate_splits`.
    """
    root = Path(root)
    classes_file = root / "classes.txt"
    classes = (
        [ln.strip() for ln in classes_file.read_text().splitlines() if ln.strip()]
        if classes_file.exists()
        else []
    )
    registry = DatasetRegistry(classes=classes)
    for dir_name, split in _SPLIT_DIRS.items():
        images_dir = root / dir_name / "images"
        if not images_dir.is_dir():
            raise MissingSplit(f"missing split directory {images_dir}")
        labels_dir = root / dir_name / "labels"
        for path in sorted(images_dir.iterdir()):
            if path.suffix.lower() not in _IMAGE_SUFFIXES:
                continue
            stem = path.stem
            width, height = _image_dims(path) if read_dims else (None, None)
            label_path = labels_dir / f"{stem}.txt"
            registry.add(
                ImageRecord(
                    image_id=stem,
                    split=split,
                    width=width,
                    height=height,
                    image_path=path,
                    label_path=label_path if label_path.exists() else None,
                )
            )
    return registry


def validate_splits(registry: DatasetRegistry) -> ValidationReport:
    """Report invariant violations; violations are data, not exceptions."""
    report = ValidationReport()
    if not registry.classes:
        report.violations.append("class list is empty")
    for rec in registry.images.values():
        if rec.split not in SPLITS:
            report.violations.append(f"{rec.image_id}: unknown split {rec.split!r}")
        if rec.width is None or rec.height is None:
            report.violations.append(f"{rec.image_id}: missing image dimensions")
        if rec.split in (VALIDATION, TEST) and rec.label_path is None:
            report.violations.append(f"{rec.image_id}: {rec.split} image lacks a label file")
        if rec.split != TRAIN_POOL and rec.label_status != "unlabeled":
            report.violations.append(
                f"{rec.image_id}: label status {rec.label_status!r} outside the pool"
            )
    return report


def check_disjoint_ids(id_sets: dict[str, set[str]]) -> list[str]:
    """Pairwise-overlap report between named id sets (split integrity check)."""
    names = sorted(id_sets)
    violations = []
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            for image_id in sorted(id_sets[a] & id_sets[b]):
                violations.append(f"{image_id}: present in both {a} and {b}")
    return violations
