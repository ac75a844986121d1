"""Attribution-method registry, partitioned by mechanism and task.

Gradient methods (the CAM family) apply to classification and segmentation;
perturbation methods split between RISE (classification/segmentation) and
its detection variant. New methods register through the same extension
point the built-ins use.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .domain import ImageTensor, SaliencyMap, TargetSpec, TaskKind
from .errors import DuplicateMethodId, TaskMismatch, UnknownMethod
from .model_zoo import ModelRegistry
from .saliency import (
    d_rise,
    generate_masks,
    grad_cam,
    grad_cam_pp,
    hires_cam,
    rise,
)

# non-paper defaults for sampled masks; override per call via params
DEFAULT_MASK_COUNT = 4000
DEFAULT_MASK_GRID = (7, 7)
DEFAULT_KEEP_PROB = 0.5
DEFAULT_SEED = 0


@dataclass(frozen=True)
class MethodDescriptor:
    method_id: str
    mechanism: str                 # gradient | perturbation
    tasks: frozenset
    runner: Callable = field(compare=False, repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "method_id": self.method_id,
            "mechanism": self.mechanism,
            "tasks": sorted(t.value for t in self.tasks),
        }


def _cam_runner(cam_fn):
    def run(registry: ModelRegistry, model_id: str, image: ImageTensor,
            target: TargetSpec, params: dict) -> SaliencyMap:
        bundle = registry.activations_and_gradients(model_id, image, target)
        return cam_fn(bundle, (image.height, image.width), target)
    return run


def _mask_params(params: dict, image: ImageTensor):
    n = int(params.get("mask_count", DEFAULT_MASK_COUNT))
    grid = tuple(params.get("mask_grid", DEFAULT_MASK_GRID))
    keep = float(params.get("keep_prob", DEFAULT_KEEP_PROB))
    seed = int(params.get("seed", DEFAULT_SEED))
    grid = (min(grid[0], image.height), min(grid[1], image.width))
    return n, grid, keep, seed


def _rise_runner(registry, model_id, image, target, params):
    n, grid, keep, seed = _mask_params(params, image)
    masks = generate_masks(n, grid, keep, (image.height, image.width), seed)
    return rise(registry, model_id, image, target, masks,
                batch_size=int(params.get("batch_size", 32)))


def _d_rise_runner(registry, model_id, image, target, params):
    n, grid, keep, seed = _mask_params(params, image)
    masks = generate_masks(n, grid, keep, (image.height, image.width), seed)
    return d_rise(registry, model_id, image, target, masks,
                  batch_size=int(params.get("batch_size", 32)))


class MethodRegistry:
    def __init__(self):
        self._lock = threading.Lock()
        self._methods: dict = {}
        self._order: list = []

    def register_method(self, descriptor: MethodDescriptor) -> str:
        with self._lock:
            if descriptor.method_id in self._methods:
                raise DuplicateMethodId(descriptor.method_id)
            self._methods[descriptor.method_id] = descriptor
            self._order.append(descriptor.method_id)
        return descriptor.method_id

    def list_methods(self, task: Optional[TaskKind] = None) -> list:
        with self._lock:
            out = [self._methods[mid] for mid in self._order]
        if task is None:
            return out
        task = TaskKind(task)
        return [m for m in out if task in m.tasks]

    def get(self, method_id: str) -> MethodDescriptor:
        with self._lock:
            if method_id not in self._methods:
                raise UnknownMethod(method_id)
            return self._methods[method_id]

    def run(self, method_id: str, registry: ModelRegistry, model_id: str,
            image: ImageTensor, target: TargetSpec,
            params: Optional[dict] = None) -> SaliencyMap:
        method = self.get(method_id)
        task = registry.descriptor(model_id).task
        if task not in method.tasks:
            raise TaskMismatch(
                f"method {method_id} does not apply to {task.value}"
            )
        return method.runner(registry, model_id, image, target, params or {})


CAM_TASKS = frozenset({TaskKind.CLASSIFICATION, TaskKind.SEGMENTATION})


def default_methods() -> MethodRegistry:
    reg = MethodRegistry()
    reg.register_method(MethodDescriptor(
        "grad_cam", "gradient", CAM_TASKS, _cam_runner(grad_cam)))
    reg.register_method(MethodDescriptor(
        "grad_cam_pp", "gradient", CAM_TASKS, _cam_runner(grad_cam_pp)))
    reg.register_method(MethodDescriptor(
        "hires_cam", "gradient", CAM_TASKS, _cam_runner(hires_cam)))
    reg.register_method(MethodDescriptor(
        "rise", "perturbation", CAM_TASKS, _rise_runner))
    reg.register_method(MethodDescriptor(
        "d_rise", "perturbation", frozenset({TaskKind.DETECTION}),
        _d_rise_runner))
    return reg
