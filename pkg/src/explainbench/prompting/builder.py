"""Structured three-stage prompt assembly.

Every bundle walks the same fixed protocol: focal_areas (original image +
overlay + describe-the-highlights instruction), prediction_check (does the
evidence support the prediction), reliability_check (compare against ground
truth, judge reliability and plausible background/object confusion).
Templates are versioned text files; given identical inputs the bundle is
byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np

from ..domain import (
    GroundTruth,
    Prediction,
    TargetSpec,
    TaskKind,
    iou,
    top1,
)
from ..errors import TaskMismatch, UnresolvableRef

PROMPT_STAGES = ("focal_areas", "prediction_check", "reliability_check")

DETECTION_MATCH_IOU = 0.5


@dataclass(frozen=True)
class PromptPart:
    kind: str      # text | image_ref
    content: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "content": self.content}

    @classmethod
    def from_json(cls, obj: dict) -> "PromptPart":
        return cls(obj["kind"], obj["content"])


@dataclass(frozen=True)
class PromptBundle:
    task: TaskKind
    parts: tuple
    stage_tags: tuple
    template_id: str

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "stage_tags", tuple(self.stage_tags))
        if len(self.parts) != len(self.stage_tags):
            raise TaskMismatch("parts and stage_tags must be parallel")
        seen = [tag for i, tag in enumerate(self.stage_tags)
                if i == 0 or self.stage_tags[i - 1] != tag]
        if tuple(seen) != PROMPT_STAGES:
            raise TaskMismatch(f"stages must appear once each in order, got {seen}")
        has_image = any(p.kind == "image_ref" for p, tag in
                        zip(self.parts, self.stage_tags)
                        if tag == "focal_areas")
        if not has_image:
            raise TaskMismatch("focal_areas stage requires an image part")

    def stage_texts(self, stage: str) -> list:
        return [p.content for p, tag in zip(self.parts, self.stage_tags)
                if tag == stage and p.kind == "text"]

    def to_json(self) -> dict:
        return {
            "task": self.task.value,
            "parts": [p.to_json() for p in self.parts],
            "stage_tags": list(self.stage_tags),
            "template_id": self.template_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PromptBundle":
        return cls(TaskKind(obj["task"]),
                   tuple(PromptPart.from_json(p) for p in obj["parts"]),
                   tuple(obj["stage_tags"]), obj["template_id"])


def _template(template_id: str, task: TaskKind, stage: str) -> str:
    path = resources.files("explainbench.prompting").joinpath(
        f"templates/{template_id}/{task.value}_{stage}.txt")
    return path.read_text(encoding="utf-8").strip()


def _format_box(box) -> str:
    return (f"(x_min={box.x_min:.1f}, y_min={box.y_min:.1f}, "
            f"x_max={box.x_max:.1f}, y_max={box.y_max:.1f})")


def _label_name(label_set, class_id: int) -> str:
    if label_set and 0 <= class_id < len(label_set):
        return str(label_set[class_id])
    return f"class {class_id}"


def compute_verdict(prediction: Prediction, ground_truth: GroundTruth,
                    target: Optional[TargetSpec] = None) -> str:
    """match/mismatch between the explained output and the ground truth.

    Classification compares top-1 to the labeled class. Detection matches
    when some ground-truth box of the same class overlaps the target box at
    IoU >= 0.5. Segmentation matches when the ground truth agrees with the
    target class on a majority of the pixels predicted as that class.
    """
    if prediction.task != ground_truth.task:
        raise TaskMismatch(
            f"prediction {prediction.task.value} vs "
            f"ground truth {ground_truth.task.value}"
        )
    task = prediction.task
    if task == TaskKind.CLASSIFICATION:
        return "match" if top1(prediction) == ground_truth.class_id \
            else "mismatch"
    if task == TaskKind.SEGMENTATION:
        if target is None or target.class_id is None:
            raise TaskMismatch("segmentation verdict needs a class target")
        region = prediction.label_map == target.class_id
        if not region.any():
            return "mismatch"
        gt_labels = ground_truth.label_map[region]
        counts = np.bincount(gt_labels)
        majority = int(np.argmax(counts))
        return "match" if majority == target.class_id else "mismatch"
    # detection
    if target is None or target.detection is None:
        raise TaskMismatch("detection verdict needs a target detection")
    predicted_class = int(np.argmax(target.detection.class_probs))
    for gt_det in ground_truth.detections or ():
        if gt_det.class_id == predicted_class and \
                iou(target.detection.box, gt_det.box) >= DETECTION_MATCH_IOU:
            return "match"
    return "mismatch"


def _prediction_text(task, prediction, target, label_set):
    if task == TaskKind.CLASSIFICATION:
        return _label_name(label_set, top1(prediction))
    if task == TaskKind.SEGMENTATION:
        return _label_name(label_set, target.class_id)
    return _label_name(label_set, int(np.argmax(target.detection.class_probs)))


def _ground_truth_text(task, ground_truth, label_set):
    if task == TaskKind.CLASSIFICATION:
        name = ground_truth.class_name or _label_name(label_set,
                                                      ground_truth.class_id)
        return name
    if task == TaskKind.SEGMENTATION:
        counts = np.bincount(ground_truth.label_map.ravel())
        present = [f'"{_label_name(label_set, cid)}" ({int(c)} px)'
                   for cid, c in enumerate(counts) if c > 0]
        return "a labeled map containing " + ", ".join(present)
    boxes = [f'"{_label_name(label_set, d.class_id)}" at {_format_box(d.box)}'
             for d in (ground_truth.detections or ())]
    return "annotated objects: " + "; ".join(boxes) if boxes \
        else "no annotated objects"


def build_prompt(task: TaskKind, image_ref: str, overlay_ref: str,
                 prediction: Prediction, ground_truth: GroundTruth,
                 label_set=(), target: Optional[TargetSpec] = None,
                 template_id: str = "v1",
                 resolver: Optional[Callable[[str], bool]] = None,
                 ) -> PromptBundle:
    """Assemble the three-stage multimodal prompt. Pure in its arguments."""
    task = TaskKind(task)
    if prediction.task != task or ground_truth.task != task:
        raise TaskMismatch("prediction/ground truth task does not match")
    if resolver is not None:
        for ref in (image_ref, overlay_ref):
            if not resolver(ref):
                raise UnresolvableRef(ref)

    prediction_name = _prediction_text(task, prediction, target, label_set)
    gt_text = _ground_truth_text(task, ground_truth, label_set)
    verdict = compute_verdict(prediction, ground_truth, target)
    verdict_clause = (
        "The model's prediction matches the stated ground truth."
        if verdict == "match" else
        "The model's prediction differs from the stated ground truth."
    )
    target_box = _format_box(target.detection.box) \
        if target is not None and target.detection is not None else ""

    fields = {
        "task": task.value,
        "prediction": prediction_name,
        "ground_truth": gt_text,
        "target_box": target_box,
        "verdict_clause": verdict_clause,
    }

    parts = [
        PromptPart("image_ref", image_ref),
        PromptPart("image_ref", overlay_ref),
        PromptPart("text", _template(template_id, task,
                                     "focal_areas").format(**fields)),
        PromptPart("text", _template(template_id, task,
                                     "prediction_check").format(**fields)),
        PromptPart("text", _template(template_id, task,
                                     "reliability_check").format(**fields)),
    ]
    stage_tags = ("focal_areas", "focal_areas", "focal_areas",
                  "prediction_check", "reliability_check")
    return PromptBundle(task=task, parts=tuple(parts), stage_tags=stage_tags,
                        template_id=template_id)
