"""Core value types: images, predictions, saliency maps, targets.

All values are immutable after construction (arrays are marked read-only),
so they can be shared freely between threads. Serialization goes through
``to_json``/``from_json`` pairs producing the canonical field names; images
additionally persist as 8-bit PNG plus a JSON metadata sidecar.
"""

from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image

from .errors import (
    DimensionMismatch,
    EmptyPrediction,
    TaskMismatch,
    ValueOutOfRange,
)


class TaskKind(str, enum.Enum):
    CLASSIFICATION = "classification"
    SEGMENTATION = "segmentation"
    DETECTION = "detection"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ImageTensor:
    """H×W×C pixel grid with all values in [0, 1]."""

    height: int
    width: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise DimensionMismatch(f"non-positive dims {self.height}x{self.width}")
        if self.channels not in (1, 3):
            raise DimensionMismatch(f"channels must be 1 or 3, got {self.channels}")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.size != self.height * self.width * self.channels:
            raise DimensionMismatch(
                f"data length {arr.size} != {self.height}x{self.width}x{self.channels}"
            )
        arr = arr.reshape(self.height, self.width, self.channels)
        if not np.all(np.isfinite(arr)):
            raise ValueOutOfRange("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueOutOfRange("image values outside [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageTensor":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3:
            raise DimensionMismatch(f"expected 2D or 3D array, got {a.ndim}D")
        return cls(a.shape[0], a.shape[1], a.shape[2], a)

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "channels": self.channels,
            "data": self.data.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ImageTensor":
        return cls(obj["height"], obj["width"], obj["channels"],
                   np.asarray(obj["data"], dtype=np.float64))


def validate_image(raw, height: int, width: int, channels: int) -> ImageTensor:
    """Build an ImageTensor from a decoded pixel buffer.

    Integer buffers are expected in [0, 255] and rescaled by 1/255; real
    buffers must already be finite and in [0, 1].
    """
    arr = np.asarray(raw)
    if arr.size != height * width * channels:
        raise DimensionMismatch(
            f"buffer length {arr.size} != declared {height}x{width}x{channels}"
        )
    if np.issubdtype(arr.dtype, np.integer):
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueOutOfRange("integer pixel outside [0, 255]")
        data = arr.astype(np.float64) / 255.0
    else:
        data = arr.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise ValueOutOfRange("non-finite pixel value")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueOutOfRange("real pixel outside [0, 1]")
    return ImageTensor(height, width, channels, data.reshape(height, width, channels))


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel rectangle; area = (x_max-x_min) * (y_max-y_min)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min < 0 or self.y_min < 0:
            raise ValueOutOfRange("box coordinates must be >= 0")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueOutOfRange("box must have positive extent")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def to_json(self) -> dict:
        return {"x_min": self.x_min, "y_min": self.y_min,
                "x_max": self.x_max, "y_max": self.y_max}

    @classmethod
    def from_json(cls, obj: dict) -> "BoundingBox":
        return cls(obj["x_min"], obj["y_min"], obj["x_max"], obj["y_max"])


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    class_probs: np.ndarray
    objectness: float

    def __post_init__(self):
        probs = np.asarray(self.class_probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise DimensionMismatch("class_probs must be a non-empty vector")
        if probs.min() < 0:
            raise ValueOutOfRange("class probabilities must be >= 0")
        if abs(probs.sum() - 1.0) > 1e-6:
            raise ValueOutOfRange(f"class_probs sums to {probs.sum()}, expected 1")
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueOutOfRange("objectness outside [0, 1]")
        object.__setattr__(self, "class_probs", _freeze(probs))

    def to_json(self) -> dict:
        return {"box": self.box.to_json(),
                "class_probs": self.class_probs.tolist(),
                "objectness": self.objectness}

    @classmethod
    def from_json(cls, obj: dict) -> "Detection":
        return cls(BoundingBox.from_json(obj["box"]),
                   np.asarray(obj["class_probs"]), obj["objectness"])


@dataclass(frozen=True)
class Prediction:
    """Task-tagged model output; exactly one payload variant is set."""

    task: TaskKind
    model_id: str
    class_probs: Optional[np.ndarray] = None
    label_map: Optional[np.ndarray] = None
    detections: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        present = [self.class_probs is not None, self.label_map is not None,
                   self.detections is not None]
        if sum(present) != 1:
            raise TaskMismatch("exactly one payload variant must be set")
        if self.task == TaskKind.CLASSIFICATION:
            if self.class_probs is None:
                raise TaskMismatch("classification requires class_probs")
            probs = np.asarray(self.class_probs, dtype=np.float64)
            if probs.size == 0:
                raise EmptyPrediction("empty class_probs")
            if probs.min() < 0 or abs(probs.sum() - 1.0) > 1e-6:
                raise ValueOutOfRange("class_probs must be a probability vector")
            object.__setattr__(self, "class_probs", _freeze(probs))
        elif self.task == TaskKind.SEGMENTATION:
            if self.label_map is None:
                raise TaskMismatch("segmentation requires label_map")
            lm = np.asarray(self.label_map)
            if lm.ndim != 2 or not np.issubdtype(lm.dtype, np.integer):
                raise DimensionMismatch("label_map must be a 2D integer grid")
            object.__setattr__(self, "label_map", _freeze(lm.astype(np.int64)))
        else:
            if self.detections is None:
                raise TaskMismatch("detection requires a detections list")
            object.__setattr__(self, "detections", tuple(self.detections))

    def to_json(self) -> dict:
        out = {"task": self.task.value, "model_id": self.model_id}
        if self.class_probs is not None:
            out["class_probs"] = self.class_probs.tolist()
        if self.label_map is not None:
            out["label_map"] = self.label_map.tolist()
        if self.detections is not None:
            out["detections"] = [d.to_json() for d in self.detections]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Prediction":
        dets = obj.get("detections")
        return cls(
            task=TaskKind(obj["task"]),
            model_id=obj["model_id"],
            class_probs=(np.asarray(obj["class_probs"])
                         if "class_probs" in obj else None),
            label_map=(np.asarray(obj["label_map"], dtype=np.int64)
                       if "label_map" in obj else None),
            detections=(tuple(Detection.from_json(d) for d in dets)
                        if dets is not None else None),
        )


def top1(pred: Prediction) -> Union[int, list]:
    """Argmax label for classification, per-detection argmax for detection.

    Ties break to the lowest index.
    """
    if pred.task == TaskKind.CLASSIFICATION:
        if pred.class_probs is None or pred.class_probs.size == 0:
            raise EmptyPrediction("no classes")
        return int(np.argmax(pred.class_probs))
    if pred.task == TaskKind.DETECTION:
        if not pred.detections:
            raise EmptyPrediction("no detections")
        return [int(np.argmax(d.class_probs)) for d in pred.detections]
    raise TaskMismatch("top1 is defined for classification and detection")


@dataclass(frozen=True)
class TargetSpec:
    """What a saliency map explains: a class, or one target detection."""

    class_id: Optional[int] = None
    detection_index: Optional[int] = None
    detection: Optional[Detection] = None

    def __post_init__(self):
        class_variant = self.class_id is not None
        det_variant = self.detection_index is not None and self.detection is not None
        if class_variant == det_variant:
            raise TaskMismatch(
                "target must be either class_id or detection_index+detection"
            )

    @property
    def is_detection(self) -> bool:
        return self.detection is not None

    def to_json(self) -> dict:
        if self.is_detection:
            return {"detection_index": self.detection_index,
                    "detection": self.detection.to_json()}
        return {"class_id": self.class_id}

    @classmethod
    def from_json(cls, obj: dict) -> "TargetSpec":
        if "detection" in obj and obj["detection"] is not None:
            return cls(detection_index=obj["detection_index"],
                       detection=Detection.from_json(obj["detection"]))
        return cls(class_id=obj["class_id"])


@dataclass(frozen=True)
class GroundTruthDetection:
    box: BoundingBox
    class_id: int
    objectness: float = 1.0

    def to_json(self) -> dict:
        return {"box": self.box.to_json(), "class_id": self.class_id,
                "objectness": self.objectness}

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruthDetection":
        return cls(BoundingBox.from_json(obj["box"]), obj["class_id"],
                   obj.get("objectness", 1.0))


@dataclass(frozen=True)
class GroundTruth:
    task: TaskKind
    class_id: Optional[int] = None
    label_map: Optional[np.ndarray] = None
    detections: Optional[tuple] = None
    class_name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        if self.task == TaskKind.CLASSIFICATION and self.class_id is None:
            raise TaskMismatch("classification ground truth requires class_id")
        if self.task == TaskKind.SEGMENTATION:
            if self.label_map is None:
                raise TaskMismatch("segmentation ground truth requires label_map")
            lm = np.asarray(self.label_map)
            if lm.ndim != 2 or not np.issubdtype(lm.dtype, np.integer):
                raise DimensionMismatch("label_map must be a 2D integer grid")
            object.__setattr__(self, "label_map", _freeze(lm.astype(np.int64)))
        if self.task == TaskKind.DETECTION:
            if self.detections is None:
                raise TaskMismatch("detection ground truth requires detections")
            object.__setattr__(self, "detections", tuple(self.detections))

    def to_json(self) -> dict:
        out: dict = {"task": self.task.value}
        if self.class_id is not None:
            out["class_id"] = self.class_id
        if self.label_map is not None:
            out["label_map"] = self.label_map.tolist()
        if self.detections is not None:
            out["detections"] = [d.to_json() for d in self.detections]
        if self.class_name is not None:
            out["class_name"] = self.class_name
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        dets = obj.get("detections")
        return cls(
            task=TaskKind(obj["task"]),
            class_id=obj.get("class_id"),
            label_map=(np.asarray(obj["label_map"], dtype=np.int64)
                       if "label_map" in obj else None),
            detections=(tuple(GroundTruthDetection.from_json(d) for d in dets)
                        if dets is not None else None),
            class_name=obj.get("class_name"),
        )


MECHANISMS = ("gradient", "perturbation")


@dataclass(frozen=True)
class SaliencyMap:
    """H×W relevance grid in [0, 1] with method/target provenance."""

    height: int
    width: int
    values: np.ndarray
    method_id: str
    mechanism: str
    target: Optional[TargetSpec] = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueOutOfRange(f"unknown mechanism {self.mechanism!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"values shape {vals.shape} != {(self.height, self.width)}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueOutOfRange("saliency contains non-finite values")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueOutOfRange("saliency values outside [0, 1]")
        object.__setattr__(self, "values", _freeze(vals))

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "values": self.values.ravel().tolist(),
            "method_id": self.method_id,
            "mechanism": self.mechanism,
            "target": self.target.to_json() if self.target else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SaliencyMap":
        vals = np.asarray(obj["values"], dtype=np.float64)
        return cls(obj["height"], obj["width"],
                   vals.reshape(obj["height"], obj["width"]),
                   obj["method_id"], obj["mechanism"],
                   TargetSpec.from_json(obj["target"]) if obj.get("target") else None)


# PNG persistence --------------------------------------------------------

def image_to_png(img: ImageTensor) -> bytes:
    """8-bit PNG encoding: values × 255 rounded half-to-even."""
    quant = np.rint(img.data * 255.0).astype(np.uint8)
    if img.channels == 1:
        pil = Image.fromarray(quant[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(quant, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def image_metadata(img: ImageTensor) -> dict:
    return {"height": img.height, "width": img.width, "channels": img.channels}


def png_to_image(data: bytes) -> ImageTensor:
    """Decode a PNG into an ImageTensor (grayscale kept, everything else RGB)."""
    pil = Image.open(io.BytesIO(data))
    if pil.mode == "L":
        arr = np.asarray(pil, dtype=np.uint8)[:, :, None]
    else:
        arr = np.asarray(pil.convert("RGB"), dtype=np.uint8)
    return validate_image(arr, arr.shape[0], arr.shape[1], arr.shape[2])


def save_image(img: ImageTensor, path) -> None:
    """Persist as 8-bit PNG plus a JSON metadata sidecar."""
    from pathlib import Path
    path = Path(path)
    path.write_bytes(image_to_png(img))
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(image_metadata(img), sort_keys=True))


def load_image(path) -> ImageTensor:
    """Load a PNG written by save_image, checking the sidecar dimensions."""
    from pathlib import Path
    path = Path(path)
    img = png_to_image(path.read_bytes())
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        declared = (meta["height"], meta["width"], meta["channels"])
        if declared != (img.height, img.width, img.channels):
            raise DimensionMismatch(
                f"sidecar {declared} != decoded "
                f"{(img.height, img.width, img.channels)}"
            )
    return img


def dumps_canonical(obj: dict) -> str:
    """Canonical JSON rendering: sorted keys, no whitespace padding."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
