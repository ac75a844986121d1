"""Batch explanation runs over a dataset manifest, scored against the
manifest's expert reference texts into the four-metric report shape."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from ..domain import GroundTruth, TaskKind
from ..errors import InvalidParameter
from ..prompting import ExplanationRequest, run_explanation
from ..textmetrics import MetricReport, evaluate_pairs
from .datasets import DatasetManifest


def _ground_truth_for(item, manifest: DatasetManifest,
                      model_label_set) -> GroundTruth:
    gt = GroundTruth.from_json(item.ground_truth)
    if gt.task == TaskKind.CLASSIFICATION and gt.class_name and \
            gt.class_name in model_label_set:
        # remap the dataset class into the model's label space by name
        return GroundTruth(task=gt.task,
                           class_id=model_label_set.index(gt.class_name),
                           class_name=gt.class_name)
    return gt


def run_bench(manifest: DatasetManifest, *, model_id: str, method_id: str,
              lvm_config, registry, methods, store, gateway,
              method_params: Optional[dict] = None):
    """Explain every manifest item, then score explanation texts against the
    stored references. Returns (MetricReport, records)."""
    label_set = registry.descriptor(model_id).label_set
    records = []
    pairs = []
    for item in manifest.items:
        data = Path(item.image_path).read_bytes()
        image_ref = store.put_blob(data)
        request = ExplanationRequest(
            image_ref=image_ref,
            task=manifest.task,
            model_id=model_id,
            method_id=method_id,
            ground_truth=_ground_truth_for(item, manifest, label_set),
            lvm_config=lvm_config,
            method_params=dict(method_params or {}),
        )
        record = run_explanation(request, registry=registry, methods=methods,
                                 store=store, gateway=gateway)
        records.append(record)
        if item.reference_text:
            pairs.append({"sample_id": item.item_id,
                          "hypothesis": record.explanation_text,
                          "reference": item.reference_text})
    if not pairs:
        raise InvalidParameter(
            f"dataset {manifest.dataset_id} carries no reference texts"
        )
    report: MetricReport = evaluate_pairs(pairs, manifest.task)
    return report, records
