"""Model registry and adapter contract, plus bundled analytic toy models.

Adapters wrap real backbones (or the bundled toys) behind two calls:
``predict`` and, for gradient-capable models, ``activations_and_gradients``.
Segmentation adapters additionally expose a per-pixel class-probability map
so perturbation methods have a soft score to track.

The toy models have closed-form outputs and gradients, which is what makes
every saliency formula in this package checkable against hand arithmetic.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .domain import (
    BoundingBox,
    Detection,
    ImageTensor,
    Prediction,
    TargetSpec,
    TaskKind,
)
from .errors import (
    AdapterFailure,
    DuplicateModelId,
    GradientsUnsupported,
    ShapeMismatch,
    TargetInvalid,
    UnknownModel,
)


@dataclass(frozen=True)
class ModelDescriptor:
    model_id: str
    task: TaskKind
    label_set: tuple
    supports_gradients: bool
    input_size: tuple
    explanation_layer: Optional[str] = None
    concurrency_safe: bool = True

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        if not self.label_set:
            raise TargetInvalid("label_set must be non-empty")

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "task": self.task.value,
            "label_set": list(self.label_set),
            "supports_gradients": self.supports_gradients,
            "input_size": list(self.input_size),
            "explanation_layer": self.explanation_layer,
        }


@dataclass(frozen=True)
class FeatureBundle:
    """Activations of the explanation layer and their target gradients."""

    feature_maps: np.ndarray  # K×h×w
    gradients: np.ndarray     # K×h×w, d(target)/d(activation)
    layer_id: str

    def __post_init__(self):
        feats = np.asarray(self.feature_maps, dtype=np.float64)
        grads = np.asarray(self.gradients, dtype=np.float64)
        if feats.ndim != 3:
            raise ShapeMismatch(f"feature_maps must be K×h×w, got {feats.shape}")
        if feats.shape != grads.shape:
            raise ShapeMismatch(
                f"features {feats.shape} and gradients {grads.shape} differ"
            )
        if not (np.all(np.isfinite(feats)) and np.all(np.isfinite(grads))):
            raise ValueError("feature bundle contains non-finite values")
        feats = np.ascontiguousarray(feats)
        grads = np.ascontiguousarray(grads)
        feats.flags.writeable = False
        grads.flags.writeable = False
        object.__setattr__(self, "feature_maps", feats)
        object.__setattr__(self, "gradients", grads)


class ModelRegistry:
    """Read-mostly registry; mutation is synchronized, reads take a snapshot."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict = {}
        self._order: list = []
        self._serial_locks: dict = {}

    def register_model(self, descriptor: ModelDescriptor, adapter) -> str:
        with self._lock:
            if descriptor.model_id in self._entries:
                raise DuplicateModelId(descriptor.model_id)
            self._entries[descriptor.model_id] = (descriptor, adapter)
            self._order.append(descriptor.model_id)
            if not descriptor.concurrency_safe:
                self._serial_locks[descriptor.model_id] = threading.Lock()
        return descriptor.model_id

    def list_models(self, task: TaskKind) -> list:
        task = TaskKind(task)
        with self._lock:
            return [self._entries[mid][0] for mid in self._order
                    if self._entries[mid][0].task == task]

    def descriptor(self, model_id: str) -> ModelDescriptor:
        return self._get(model_id)[0]

    def _get(self, model_id: str):
        with self._lock:
            if model_id not in self._entries:
                raise UnknownModel(model_id)
            return self._entries[model_id]

    def _call(self, model_id, fn, *args):
        serial = self._serial_locks.get(model_id)
        if serial is not None:
            with serial:
                return fn(*args)
        return fn(*args)

    def predict(self, model_id: str, image: ImageTensor) -> Prediction:
        descriptor, adapter = self._get(model_id)
        try:
            pred = self._call(model_id, adapter.predict, image)
        except Exception as exc:
            raise AdapterFailure(f"{model_id}.predict: {exc}") from exc
        if pred.task != descriptor.task:
            raise AdapterFailure(
                f"{model_id} returned {pred.task.value} for a "
                f"{descriptor.task.value} model"
            )
        if pred.label_map is not None and pred.label_map.shape != (
                image.height, image.width):
            raise AdapterFailure(f"{model_id} label_map does not match image dims")
        return pred

    def activations_and_gradients(self, model_id: str, image: ImageTensor,
                                  target: TargetSpec) -> FeatureBundle:
        descriptor, adapter = self._get(model_id)
        if not descriptor.supports_gradients:
            raise GradientsUnsupported(model_id)
        try:
            bundle = self._call(model_id, adapter.activations_and_gradients,
                                image, target)
        except (TargetInvalid, GradientsUnsupported):
            raise
        except Exception as exc:
            raise AdapterFailure(f"{model_id}.activations_and_gradients: {exc}") from exc
        return bundle

    def class_prob_map(self, model_id: str, image: ImageTensor) -> np.ndarray:
        descriptor, adapter = self._get(model_id)
        if not hasattr(adapter, "class_prob_map"):
            raise AdapterFailure(f"{model_id} exposes no class probability map")
        try:
            return self._call(model_id, adapter.class_prob_map, image)
        except Exception as exc:
            raise AdapterFailure(f"{model_id}.class_prob_map: {exc}") from exc


# toy models ------------------------------------------------------------

def _pixel_brightness(image: ImageTensor) -> np.ndarray:
    """H×W channel mean; the single feature plane of every toy model."""
    return image.data.mean(axis=2)


def _half_sums(image: ImageTensor):
    """Sums over the left and right half columns (middle column of an
    odd-width image belongs to neither half)."""
    v = _pixel_brightness(image)
    w = image.width
    left = float(v[:, : w // 2].sum())
    right = float(v[:, w - w // 2:].sum())
    return left, right


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


class ToyRegionScorer:
    """Classification: class 0 scores the left half, class 1 the right."""

    descriptor = ModelDescriptor(
        model_id="toy_region_scorer",
        task=TaskKind.CLASSIFICATION,
        label_set=("left", "right"),
        supports_gradients=False,
        input_size=(16, 16),
    )

    def predict(self, image: ImageTensor) -> Prediction:
        left, right = _half_sums(image)
        probs = _softmax(np.array([left, right]))
        return Prediction(task=TaskKind.CLASSIFICATION,
                          model_id=self.descriptor.model_id, class_probs=probs)


class ToyIdentityConv:
    """One feature map equal to the input; per-class scalar targets are
    sum(A), -sum(A), and 0, giving gradients of exactly 1, -1, and 0."""

    descriptor = ModelDescriptor(
        model_id="toy_identity_conv",
        task=TaskKind.CLASSIFICATION,
        label_set=("sum", "neg_sum", "dead"),
        supports_gradients=True,
        input_size=(16, 16),
        explanation_layer="identity",
    )

    def predict(self, image: ImageTensor) -> Prediction:
        s = float(_pixel_brightness(image).sum())
        probs = _softmax(np.array([s, -s, 0.0]))
        return Prediction(task=TaskKind.CLASSIFICATION,
                          model_id=self.descriptor.model_id, class_probs=probs)

    def scalar_target(self, image: ImageTensor, target: TargetSpec) -> float:
        features = _pixel_brightness(image)
        return self.scalar_from_features(features, target)

    def scalar_from_features(self, features: np.ndarray,
                             target: TargetSpec) -> float:
        cid = self._class_id(target)
        total = float(features.sum())
        return (total, -total, 0.0)[cid]

    def _class_id(self, target: TargetSpec) -> int:
        if target.class_id is None:
            raise TargetInvalid("toy_identity_conv expects a class target")
        if not 0 <= target.class_id < len(self.descriptor.label_set):
            raise TargetInvalid(f"class_id {target.class_id} out of range")
        return target.class_id

    def activations_and_gradients(self, image: ImageTensor,
                                  target: TargetSpec) -> FeatureBundle:
        cid = self._class_id(target)
        features = _pixel_brightness(image)
        grad_value = (1.0, -1.0, 0.0)[cid]
        grads = np.full_like(features, grad_value)
        return FeatureBundle(features[None], grads[None],
                             layer_id=self.descriptor.explanation_layer)


class ToyBoxDetector:
    """Detection: one unit box centered on the brightest pixel; objectness is
    that pixel's value, class probabilities follow the left/right half sums."""

    def __init__(self, box_size: tuple = (1.0, 1.0)):
        self.box_size = box_size
        self.descriptor = ModelDescriptor(
            model_id="toy_box_detector",
            task=TaskKind.DETECTION,
            label_set=("left", "right"),
            supports_gradients=False,
            input_size=(16, 16),
        )

    def predict(self, image: ImageTensor) -> Prediction:
        v = _pixel_brightness(image)
        peak = float(v.max())
        if peak <= 0.0:
            return Prediction(task=TaskKind.DETECTION,
                              model_id=self.descriptor.model_id, detections=())
        r, c = np.unravel_index(int(np.argmax(v)), v.shape)
        bh, bw = self.box_size
        cx, cy = c + 0.5, r + 0.5
        box = BoundingBox(
            x_min=max(0.0, cx - bw / 2), y_min=max(0.0, cy - bh / 2),
            x_max=min(float(image.width), cx + bw / 2),
            y_max=min(float(image.height), cy + bh / 2),
        )
        left, right = _half_sums(image)
        total = left + right
        probs = (np.array([left, right]) / total if total > 0
                 else np.array([0.5, 0.5]))
        det = Detection(box=box, class_probs=probs, objectness=min(1.0, peak))
        return Prediction(task=TaskKind.DETECTION,
                          model_id=self.descriptor.model_id, detections=(det,))


class ToyThresholdSegmenter:
    """Segmentation: label 1 where brightness > 0.5. The soft score is the
    brightness itself, so the scalar target (mean foreground probability over
    the currently-foreground region) is linear in the pixels."""

    descriptor = ModelDescriptor(
        model_id="toy_threshold_segmenter",
        task=TaskKind.SEGMENTATION,
        label_set=("background", "foreground"),
        supports_gradients=True,
        input_size=(16, 16),
        explanation_layer="brightness",
    )

    def predict(self, image: ImageTensor) -> Prediction:
        v = _pixel_brightness(image)
        return Prediction(task=TaskKind.SEGMENTATION,
                          model_id=self.descriptor.model_id,
                          label_map=(v > 0.5).astype(np.int64))

    def class_prob_map(self, image: ImageTensor) -> np.ndarray:
        v = _pixel_brightness(image)
        return np.stack([1.0 - v, v], axis=-1)

    def _region(self, image: ImageTensor, class_id: int) -> np.ndarray:
        labels = self.predict(image).label_map
        region = labels == class_id
        if not region.any():
            raise TargetInvalid(f"no pixels currently assigned to class {class_id}")
        return region

    def scalar_target(self, image: ImageTensor, target: TargetSpec) -> float:
        cid = self._check_class(target)
        region = self._region(image, cid)
        probs = self.class_prob_map(image)
        return float(probs[..., cid][region].mean())

    def _check_class(self, target: TargetSpec) -> int:
        if target.class_id is None:
            raise TargetInvalid("segmentation target must be a class")
        if target.class_id not in (0, 1):
            raise TargetInvalid(f"class_id {target.class_id} out of range")
        return target.class_id

    def activations_and_gradients(self, image: ImageTensor,
                                  target: TargetSpec) -> FeatureBundle:
        cid = self._check_class(target)
        features = _pixel_brightness(image)
        region = self._region(image, cid)
        sign = 1.0 if cid == 1 else -1.0
        grads = np.where(region, sign / region.sum(), 0.0)
        return FeatureBundle(features[None], grads[None],
                             layer_id=self.descriptor.explanation_layer)


def default_registry() -> ModelRegistry:
    """Registry preloaded with the four bundled toy models."""
    registry = ModelRegistry()
    for toy in (ToyRegionScorer(), ToyIdentityConv(), ToyBoxDetector(),
                ToyThresholdSegmenter()):
        registry.register_model(toy.descriptor, toy)
    return registry


def register_from_manifest(registry: ModelRegistry, manifest_path) -> list:
    """Load adapter plugins from a manifest file.

    The manifest is JSON: {"adapters": [{"model_id", "task", "entry_point"
    ("package.module:ClassName"), "config" (constructor map, e.g. weights
    path and device string)}]}. Each class is constructed with its config
    map and must expose a ``descriptor`` consistent with the manifest row.
    """
    import importlib
    import json
    from pathlib import Path

    doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    registered = []
    for entry in doc.get("adapters", []):
        module_name, _, attr = entry["entry_point"].partition(":")
        if not module_name or not attr:
            raise TargetInvalid(
                f"bad entry point {entry.get('entry_point')!r}"
            )
        cls = getattr(importlib.import_module(module_name), attr)
        adapter = cls(entry.get("config", {}))
        descriptor = adapter.descriptor
        if descriptor.model_id != entry["model_id"] or \
                descriptor.task != TaskKind(entry["task"]):
            raise TargetInvalid(
                f"manifest row {entry['model_id']}/{entry['task']} does not "
                f"match adapter descriptor {descriptor.model_id}/"
                f"{descriptor.task.value}"
            )
        registered.append(registry.register_model(descriptor, adapter))
    return registered
