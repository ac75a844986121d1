"""End-to-end explain workflow: predict, attribute, render, prompt, ask the
LVM, persist. Failures propagate wrapped with the stage they occurred in, and
no record is written unless every stage succeeded.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from ..domain import (
    GroundTruth,
    ImageTensor,
    Prediction,
    SaliencyMap,
    TargetSpec,
    TaskKind,
    dumps_canonical,
    image_to_png,
    png_to_image,
    top1,
)
from ..errors import EmptyPrediction, ExplainError, StageError, TargetInvalid
from .builder import build_prompt, compute_verdict
from .overlay import render_overlay

DEFAULT_OVERLAY_ALPHA = 0.5


@dataclass(frozen=True)
class ExplanationRequest:
    image_ref: str
    task: TaskKind
    model_id: str
    method_id: str
    ground_truth: GroundTruth
    target: Optional[TargetSpec] = None
    lvm_config: object = None
    method_params: dict = field(default_factory=dict)
    overlay_alpha: float = DEFAULT_OVERLAY_ALPHA
    template_id: str = "v1"

    def __post_init__(self):
        object.__setattr__(self, "task", TaskKind(self.task))

    def to_json(self) -> dict:
        return {
            "image_ref": self.image_ref,
            "task": self.task.value,
            "model_id": self.model_id,
            "method_id": self.method_id,
            "target": self.target.to_json() if self.target else None,
            "ground_truth": self.ground_truth.to_json(),
            "method_params": dict(self.method_params),
            "overlay_alpha": self.overlay_alpha,
            "template_id": self.template_id,
        }


@dataclass(frozen=True)
class ExplanationRecord:
    record_id: int
    request: dict
    prediction: Prediction
    saliency_ref: str
    overlay_ref: str
    explanation_text: str
    verdict: str
    created_at: str
    lvm_provider: str
    template_id: str

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "request": self.request,
            "prediction": self.prediction.to_json(),
            "saliency_ref": self.saliency_ref,
            "overlay_ref": self.overlay_ref,
            "explanation_text": self.explanation_text,
            "verdict": self.verdict,
            "created_at": self.created_at,
            "lvm_provider": self.lvm_provider,
            "template_id": self.template_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExplanationRecord":
        return cls(
            record_id=obj["record_id"],
            request=obj["request"],
            prediction=Prediction.from_json(obj["prediction"]),
            saliency_ref=obj["saliency_ref"],
            overlay_ref=obj["overlay_ref"],
            explanation_text=obj["explanation_text"],
            verdict=obj["verdict"],
            created_at=obj["created_at"],
            lvm_provider=obj["lvm_provider"],
            template_id=obj["template_id"],
        )


def resolve_default_target(prediction: Prediction) -> TargetSpec:
    """Explain the most confident output when the caller names no target."""
    if prediction.task == TaskKind.CLASSIFICATION:
        return TargetSpec(class_id=top1(prediction))
    if prediction.task == TaskKind.SEGMENTATION:
        labels, counts = np.unique(prediction.label_map, return_counts=True)
        nonzero = labels[labels > 0]
        if nonzero.size:
            chosen = int(nonzero[np.argmax(counts[labels > 0])])
        else:
            chosen = int(labels[np.argmax(counts)])
        return TargetSpec(class_id=chosen)
    if not prediction.detections:
        raise EmptyPrediction("no detections to explain")
    scored = [d.objectness * float(np.max(d.class_probs))
              for d in prediction.detections]
    idx = int(np.argmax(scored))
    return TargetSpec(detection_index=idx,
                      detection=prediction.detections[idx])


def _stage(stage_name: str):
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(stage_name, exc) from exc
            return False
    return _StageContext()


def run_explanation(request: ExplanationRequest, *, registry, methods, store,
                    gateway, clock=time.time) -> ExplanationRecord:
    """Chain the full workflow; persist the record only after the LVM step.

    Any component error re-raises as StageError carrying the stage name and
    the original error's code.
    """
    with _stage("load"):
        image = png_to_image(store.get_blob(request.image_ref))

    with _stage("predict"):
        prediction = registry.predict(request.model_id, image)
        if prediction.task != request.task:
            raise TargetInvalid(
                f"model task {prediction.task.value} != request {request.task.value}"
            )

    with _stage("target"):
        target = request.target or resolve_default_target(prediction)

    with _stage("saliency"):
        smap = methods.run(request.method_id, registry, request.model_id,
                           image, target, request.method_params)
        saliency_ref = store.put_blob(
            dumps_canonical(smap.to_json()).encode("utf-8"))

    with _stage("render"):
        overlay = render_overlay(image, smap, request.overlay_alpha)
        overlay_ref = store.put_blob(image_to_png(overlay))

    with _stage("prompt"):
        label_set = registry.descriptor(request.model_id).label_set
        bundle = build_prompt(
            request.task, request.image_ref, overlay_ref, prediction,
            request.ground_truth, label_set=label_set, target=target,
            template_id=request.template_id, resolver=store.has_blob)

    with _stage("lvm"):
        result = gateway.complete(bundle, request.lvm_config)

    with _stage("verdict"):
        verdict = compute_verdict(prediction, request.ground_truth, target)

    with _stage("persist"):
        created = datetime.fromtimestamp(clock(), tz=timezone.utc).isoformat()
        request_json = request.to_json()
        request_json["target"] = target.to_json()
        payload = {
            "request": request_json,
            "prediction": prediction.to_json(),
            "saliency_ref": saliency_ref,
            "overlay_ref": overlay_ref,
            "explanation_text": result.text,
            "verdict": verdict,
            "created_at": created,
            "lvm_provider": result.provider,
            "template_id": request.template_id,
        }
        record_id = store.append_record("explanation", payload)

    return ExplanationRecord(record_id=record_id, request=request_json,
                             prediction=prediction, saliency_ref=saliency_ref,
                             overlay_ref=overlay_ref,
                             explanation_text=result.text, verdict=verdict,
                             created_at=created, lvm_provider=result.provider,
                             template_id=request.template_id)
