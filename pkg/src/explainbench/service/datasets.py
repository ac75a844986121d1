"""Dataset ingestion into task-tagged manifests.

Three on-disk layouts are understood:

- ``folder_labels`` (classification): one directory per class name holding
  images; an optional ``<stem>.ref.txt`` beside an image carries the expert
  reference text.
- ``coco_json`` (detection): ``annotations.json`` in COCO shape (images /
  annotations / categories) next to the image files; optional
  ``references.json`` maps file names to reference texts.
- ``mask_pngs`` (segmentation): ``images/`` and ``masks/`` directories with
  matching stems; the mask PNG's gray values are class ids; optional
  ``<stem>.ref.txt`` under ``images/``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..domain import TaskKind
from ..errors import InvalidParameter, MalformedAnnotation, MissingImage

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class DatasetItem:
    item_id: str
    image_path: str
    ground_truth: dict          # GroundTruth JSON shape
    reference_text: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "image_path": self.image_path,
            "ground_truth": self.ground_truth,
            "reference_text": self.reference_text,
        }


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    task: TaskKind
    items: tuple
    label_set: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "label_set", tuple(self.label_set))

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "task": self.task.value,
            "label_set": list(self.label_set),
            "items": [item.to_json() for item in self.items],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        items = tuple(DatasetItem(i["item_id"], i["image_path"],
                                  i["ground_truth"], i.get("reference_text"))
                      for i in obj["items"])
        return cls(obj["dataset_id"], TaskKind(obj["task"]), items,
                   tuple(obj.get("label_set", ())))


def _reference_for(image_path: Path) -> Optional[str]:
    ref = image_path.with_suffix(".ref.txt")
    return ref.read_text(encoding="utf-8").strip() if ref.exists() else None


def _ingest_folder_labels(root: Path, dataset_id: str) -> DatasetManifest:
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise MalformedAnnotation(f"{root}: no class directories")
    items = []
    for class_id, name in enumerate(classes):
        for image_path in sorted((root / name).iterdir()):
            if image_path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            items.append(DatasetItem(
                item_id=f"{name}/{image_path.stem}",
                image_path=str(image_path),
                ground_truth={"task": "classification", "class_id": class_id,
                              "class_name": name},
                reference_text=_reference_for(image_path),
            ))
    return DatasetManifest(dataset_id, TaskKind.CLASSIFICATION, tuple(items),
                           tuple(classes))


def _ingest_coco_json(root: Path, dataset_id: str) -> DatasetManifest:
    ann_path = root / "annotations.json"
    if not ann_path.exists():
        raise MalformedAnnotation(f"{ann_path}: missing annotations file")
    try:
        doc = json.loads(ann_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedAnnotation(f"{ann_path}: {exc}") from exc

    refs = {}
    refs_path = root / "references.json"
    if refs_path.exists():
        refs = json.loads(refs_path.read_text(encoding="utf-8"))

    try:
        categories = sorted(doc["categories"], key=lambda c: c["id"])
        cat_index = {c["id"]: i for i, c in enumerate(categories)}
        label_set = tuple(c["name"] for c in categories)
        images = {img["id"]: img for img in doc["images"]}
    except (KeyError, TypeError) as exc:
        raise MalformedAnnotation(f"{ann_path}: bad structure: {exc}") from exc

    boxes_by_image: dict = {img_id: [] for img_id in images}
    for idx, ann in enumerate(doc.get("annotations", [])):
        try:
            x, y, w, h = ann["bbox"]
            if w <= 0 or h <= 0:
                raise ValueError(f"degenerate bbox {ann['bbox']}")
            entry = {
                "box": {"x_min": float(x), "y_min": float(y),
                        "x_max": float(x + w), "y_max": float(y + h)},
                "class_id": cat_index[ann["category_id"]],
                "objectness": 1.0,
            }
            boxes_by_image[ann["image_id"]].append(entry)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedAnnotation(
                f"{ann_path}: annotation #{idx}: {exc}"
            ) from exc

    items = []
    for img_id in sorted(images):
        info = images[img_id]
        image_path = root / info["file_name"]
        if not image_path.exists():
            raise MissingImage(str(image_path))
        items.append(DatasetItem(
            item_id=Path(info["file_name"]).stem,
            image_path=str(image_path),
            ground_truth={"task": "detection",
                          "detections": boxes_by_image[img_id]},
            reference_text=refs.get(info["file_name"]),
        ))
    return DatasetManifest(dataset_id, TaskKind.DETECTION, tuple(items),
                           label_set)


def _ingest_mask_pngs(root: Path, dataset_id: str) -> DatasetManifest:
    import numpy as np
    from PIL import Image

    images_dir = root / "images"
    masks_dir = root / "masks"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise MalformedAnnotation(f"{root}: expected images/ and masks/")
    label_path = root / "labels.json"
    label_set = tuple(json.loads(label_path.read_text())) \
        if label_path.exists() else ("background", "foreground")

    items = []
    for image_path in sorted(images_dir.iterdir()):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        mask_path = masks_dir / f"{image_path.stem}.png"
        if not mask_path.exists():
            raise MalformedAnnotation(f"{mask_path}: no mask for "
                                      f"{image_path.name}")
        mask = np.asarray(Image.open(mask_path).convert("L"), dtype=np.int64)
        items.append(DatasetItem(
            item_id=image_path.stem,
            image_path=str(image_path),
            ground_truth={"task": "segmentation",
                          "label_map": mask.tolist()},
            reference_text=_reference_for(image_path),
        ))
    return DatasetManifest(dataset_id, TaskKind.SEGMENTATION, tuple(items),
                           label_set)


FORMATS = {
    "folder_labels": _ingest_folder_labels,
    "coco_json": _ingest_coco_json,
    "mask_pngs": _ingest_mask_pngs,
}


def ingest_dataset(root, fmt: str, dataset_id: Optional[str] = None,
                   store=None) -> DatasetManifest:
    """Walk a dataset layout into a manifest; persist it when given a store."""
    root = Path(root)
    if not root.exists():
        raise MissingImage(f"dataset root {root} does not exist")
    if fmt not in FORMATS:
        raise InvalidParameter(
            f"unknown format {fmt!r}; expected one of {sorted(FORMATS)}"
        )
    manifest = FORMATS[fmt](root, dataset_id or root.name)
    for item in manifest.items:
        if not Path(item.image_path).exists():
            raise MissingImage(item.image_path)
    if store is not None:
        store.save_manifest(manifest.to_json())
    return manifest
