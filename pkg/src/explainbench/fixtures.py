"""Bundled desk-scale fixture datasets: five-plus labeled samples per task
with expert-style reference texts, generated deterministically so repeated
runs produce byte-identical trees. The images are sized for the toy models;
the reference texts are ours, written to partially overlap the mock
provider's phrasing so metric scores land strictly between 0 and 1.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

SIZE = 12  # fixture images are SIZE x SIZE RGB


def _save_png(path: Path, array: np.ndarray) -> None:
    Image.fromarray(array.astype(np.uint8), mode="RGB").save(path,
                                                             format="PNG")


def _base_image(rng) -> np.ndarray:
    return (rng.random((SIZE, SIZE, 3)) * 40).astype(np.uint8)


def _classification_tree(root: Path, rng) -> None:
    refs = {
        "left": [
            "Model predicted left; the highlighted evidence sits in the "
            "left half of the image; verdict match",
            "Model predicted left; the salient region covers the bright "
            "left side; verdict match",
            "Model predicted left; warm colors concentrate on the left "
            "half; verdict match",
        ],
        "right": [
            "Model predicted right; the highlighted evidence sits in the "
            "right half of the image; verdict match",
            "Model predicted right; the salient region covers the bright "
            "right side; verdict match",
            "Model predicted right; warm colors concentrate on the right "
            "half; verdict match",
        ],
    }
    for class_name in ("left", "right"):
        class_dir = root / class_name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(3):
            img = _base_image(rng)
            half = slice(0, SIZE // 2) if class_name == "left" \
                else slice(SIZE // 2, SIZE)
            img[:, half, :] = 150 + (rng.random((SIZE, SIZE // 2, 3))
                                     * 100).astype(np.uint8)
            name = f"{class_name}_{i:02d}"
            _save_png(class_dir / f"{name}.png", img)
            (class_dir / f"{name}.ref.txt").write_text(
                refs[class_name][i], encoding="utf-8")


def _segmentation_tree(root: Path, rng) -> None:
    images = root / "images"
    masks = root / "masks"
    images.mkdir(parents=True, exist_ok=True)
    masks.mkdir(parents=True, exist_ok=True)
    refs = [
        "Model predicted foreground; the bright blob is highlighted and "
        "segmented correctly; verdict match",
        "Model predicted foreground; the salient region traces the bright "
        "object; verdict match",
        "Model predicted foreground; highlighted pixels follow the blob "
        "outline; verdict match",
        "Model predicted foreground; the warm region matches the object "
        "mask; verdict match",
        "Model predicted foreground; saliency centers on the bright "
        "region; verdict match",
    ]
    for i in range(5):
        img = _base_image(rng)
        r0, c0 = 2 + int(rng.integers(0, 4)), 2 + int(rng.integers(0, 4))
        h, w = 3 + int(rng.integers(0, 3)), 3 + int(rng.integers(0, 3))
        img[r0:r0 + h, c0:c0 + w, :] = 170 + (rng.random((min(h, SIZE - r0),
                                                          min(w, SIZE - c0),
                                                          3)) * 80
                                              ).astype(np.uint8)
        # ground-truth mask mirrors the brightness rule at 8-bit precision
        gray = img.mean(axis=2)
        mask = (gray > 127.5).astype(np.uint8)
        name = f"seg_{i:02d}"
        _save_png(images / f"{name}.png", img)
        Image.fromarray(mask, mode="L").save(masks / f"{name}.png",
                                             format="PNG")
        (images / f"{name}.ref.txt").write_text(refs[i], encoding="utf-8")
    (root / "labels.json").write_text(
        json.dumps(["background", "foreground"]))


def _detection_tree(root: Path, rng) -> None:
    root.mkdir(parents=True, exist_ok=True)
    images, annotations, references = [], [], {}
    refs = [
        "Model predicted left; the detector focused on the bright spot "
        "inside the box; verdict match",
        "Model predicted left; highlighted evidence falls within the "
        "detected box; verdict match",
        "Model predicted right; the box around the bright spot carries "
        "the saliency; verdict match",
        "Model predicted right; the salient cell coincides with the "
        "annotated object; verdict match",
        "Model predicted left; saliency peaks at the object location; "
        "verdict match",
    ]
    spots = [(3, 2), (7, 4), (4, 9), (8, 10), (6, 1)]
    for i, (r, c) in enumerate(spots):
        img = _base_image(rng)
        img[r, c, :] = 255
        name = f"det_{i:02d}.png"
        _save_png(root / name, img)
        images.append({"id": i + 1, "file_name": name,
                       "width": SIZE, "height": SIZE})
        annotations.append({
            "id": i + 1, "image_id": i + 1,
            "bbox": [float(c), float(r), 1.0, 1.0],
            "category_id": 1 if c < SIZE // 2 else 2,
        })
        references[name] = refs[i]
    doc = {
        "images": images,
        "annotations": annotations,
        "categories": [{"id": 1, "name": "left"}, {"id": 2, "name": "right"}],
    }
    (root / "annotations.json").write_text(json.dumps(doc, indent=2))
    (root / "references.json").write_text(json.dumps(references, indent=2))


def write_fixture_tree(root) -> dict:
    """Materialize the three fixture datasets under root; returns their
    directories keyed by task name."""
    root = Path(root)
    layout = {
        "classification": root / "classification",
        "segmentation": root / "segmentation",
        "detection": root / "detection",
    }
    rng = np.random.default_rng(2024)
    _classification_tree(layout["classification"], rng)
    _segmentation_tree(layout["segmentation"], rng)
    _detection_tree(layout["detection"], rng)
    return {task: str(path) for task, path in layout.items()}


FIXTURE_FORMATS = {
    "classification": "folder_labels",
    "segmentation": "mask_pngs",
    "detection": "coco_json",
}
