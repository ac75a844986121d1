"""Command-line entry points: serve, explain, eval, bench, masks, plus the
supporting ingest/fixtures commands. Exit codes: 0 success, 1 domain error,
2 usage error."""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click
import numpy as np

from ..domain import (
    GroundTruth,
    TargetSpec,
    TaskKind,
    png_to_image,
    top1,
)
from ..errors import ExplainError, InvalidParameter, PortInUse
from ..fixtures import FIXTURE_FORMATS, write_fixture_tree
from ..lvm import LvmConfig, default_gateway
from ..methods import default_methods
from ..model_zoo import default_registry
from ..prompting import ExplanationRequest, resolve_default_target, run_explanation
from ..saliency import generate_masks, save_maskset
from ..textmetrics import (
    evaluate_pairs,
    format_report,
    read_pairs,
    report_to_csv,
)
from .bench import run_bench
from .config import ServiceConfig, load_config
from .datasets import DatasetManifest, ingest_dataset
from .store import RunStore

TASKS = [t.value for t in TaskKind]


def _grid(value: str):
    try:
        h, w = value.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise click.BadParameter(f"expected HxW, got {value!r}")


def _lvm_config(provider: str, config: ServiceConfig) -> LvmConfig:
    return LvmConfig(
        provider=provider,
        endpoint=config.lvm_endpoint,
        credential_ref=config.lvm_credential_ref,
        timeout=config.lvm_timeout,
        max_retries=config.lvm_max_retries,
        max_output_tokens=config.lvm_max_output_tokens,
        model=config.lvm_model,
    )


@click.group()
def main():
    """Saliency maps, LVM explanations, and text-metric scoring."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="TOML config file.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--store", "store_path", default=None)
def serve(config_path, host, port, store_path):
    """Run the HTTP API."""
    import uvicorn
    from .app import build_app

    cfg = load_config(config_path)
    if host:
        cfg.host = host
    if port:
        cfg.port = port
    if store_path:
        cfg.store_path = store_path

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((cfg.host, cfg.port))
    except OSError as exc:
        raise PortInUse(f"{cfg.host}:{cfg.port}: {exc}") from exc
    finally:
        probe.close()

    app = build_app(config=cfg)
    click.echo(f"serving on http://{cfg.host}:{cfg.port} "
               f"(store: {cfg.store_path})")
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")


def _parse_ground_truth(task: TaskKind, raw, label_set) -> GroundTruth:
    if task == TaskKind.CLASSIFICATION:
        if raw in label_set:
            cid = label_set.index(raw)
        else:
            try:
                cid = int(raw)
            except ValueError:
                raise InvalidParameter(
                    f"ground truth {raw!r} not in label set {list(label_set)}"
                )
        return GroundTruth(task=task, class_id=cid,
                           class_name=label_set[cid]
                           if 0 <= cid < len(label_set) else None)
    if task == TaskKind.SEGMENTATION:
        img = png_to_image(Path(raw).read_bytes())
        label_map = np.rint(img.data[:, :, 0] * 255).astype(np.int64)
        return GroundTruth(task=task, label_map=label_map)
    return GroundTruth.from_json(json.loads(Path(raw).read_text()))


def _self_ground_truth(prediction, target) -> GroundTruth:
    """No labeled truth supplied; treat the model's own output as reference."""
    if prediction.task == TaskKind.CLASSIFICATION:
        return GroundTruth(task=prediction.task, class_id=top1(prediction))
    if prediction.task == TaskKind.SEGMENTATION:
        return GroundTruth(task=prediction.task,
                           label_map=np.asarray(prediction.label_map))
    from ..domain import GroundTruthDetection
    dets = tuple(GroundTruthDetection(d.box, int(np.argmax(d.class_probs)))
                 for d in prediction.detections)
    return GroundTruth(task=prediction.task, detections=dets)


@main.command()
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True))
@click.option("--task", required=True, type=click.Choice(TASKS))
@click.option("--model", "model_id", required=True)
@click.option("--method", "method_id", required=True)
@click.option("--target", default=None,
              help="Class name/id, or detection index.")
@click.option("--ground-truth", "ground_truth_raw", default=None,
              help="Class name (classification), label-map PNG "
                   "(segmentation), or JSON file (detection). Defaults to "
                   "the model's own prediction.")
@click.option("--lvm", "lvm_provider", default="mock")
@click.option("--store", "store_path", default="./runs")
@click.option("--mask-count", type=int, default=None)
@click.option("--seed", type=int, default=0)
def explain(image_path, task, model_id, method_id, target, ground_truth_raw,
            lvm_provider, store_path, mask_count, seed):
    """Explain one image end to end and print the explanation."""
    task = TaskKind(task)
    store = RunStore(store_path)
    registry = default_registry()
    methods = default_methods()
    gateway = default_gateway(blob_resolver=store.get_blob)
    cfg = load_config(None)

    image_ref = store.put_blob(Path(image_path).read_bytes())
    image = png_to_image(store.get_blob(image_ref))
    prediction = registry.predict(model_id, image)
    label_set = registry.descriptor(model_id).label_set

    target_spec = None
    if target is not None:
        if task == TaskKind.DETECTION:
            idx = int(target)
            if not prediction.detections or \
                    not 0 <= idx < len(prediction.detections):
                raise InvalidParameter(f"detection index {idx} out of range")
            target_spec = TargetSpec(detection_index=idx,
                                     detection=prediction.detections[idx])
        else:
            cid = label_set.index(target) if target in label_set \
                else int(target)
            target_spec = TargetSpec(class_id=cid)
    else:
        target_spec = resolve_default_target(prediction)

    if ground_truth_raw is not None:
        ground_truth = _parse_ground_truth(task, ground_truth_raw, label_set)
    else:
        ground_truth = _self_ground_truth(prediction, target_spec)

    params = {"seed": seed}
    if mask_count:
        params["mask_count"] = mask_count
    record = run_explanation(
        ExplanationRequest(image_ref=image_ref, task=task, model_id=model_id,
                           method_id=method_id, target=target_spec,
                           ground_truth=ground_truth,
                           lvm_config=_lvm_config(lvm_provider, cfg),
                           method_params=params),
        registry=registry, methods=methods, store=store, gateway=gateway)
    click.echo(f"record {record.record_id} (verdict {record.verdict})")
    click.echo(record.explanation_text)


@main.command("eval")
@click.option("--pairs", "pairs_path", required=True,
              type=click.Path(exists=True))
@click.option("--task", required=True, type=click.Choice(TASKS))
@click.option("--csv", "csv_path", default=None)
def eval_cmd(pairs_path, task, csv_path):
    """Score hypothesis/reference pairs with the four text metrics."""
    records = read_pairs(pairs_path)
    report = evaluate_pairs(records, TaskKind(task))
    click.echo(format_report(report))
    if csv_path:
        Path(csv_path).write_text(report_to_csv(report))
        click.echo(f"csv written to {csv_path}")


@main.command()
@click.option("--dataset", "dataset_id", required=True)
@click.option("--model", "model_id", required=True)
@click.option("--method", "method_id", required=True)
@click.option("--lvm", "lvm_provider", default="mock")
@click.option("--store", "store_path", default="./runs")
@click.option("--out", "out_path", default=None)
@click.option("--mask-count", type=int, default=256)
@click.option("--seed", type=int, default=0)
def bench(dataset_id, model_id, method_id, lvm_provider, store_path,
          out_path, mask_count, seed):
    """Run explanations over an ingested dataset and print the report."""
    store = RunStore(store_path)
    manifest = DatasetManifest.from_json(store.load_manifest(dataset_id))
    registry = default_registry()
    methods = default_methods()
    gateway = default_gateway(blob_resolver=store.get_blob)
    cfg = load_config(None)
    report, records = run_bench(
        manifest, model_id=model_id, method_id=method_id,
        lvm_config=_lvm_config(lvm_provider, cfg), registry=registry,
        methods=methods, store=store, gateway=gateway,
        method_params={"mask_count": mask_count, "seed": seed})
    click.echo(format_report(report))
    click.echo(f"{len(records)} explanation records appended")
    if out_path:
        Path(out_path).write_text(report_to_csv(report))
        click.echo(f"csv written to {out_path}")


@main.command()
@click.option("--grid", required=True, help="Small grid as HxW, e.g. 7x7.")
@click.option("--n", "count", type=int, default=4000)
@click.option("--seed", type=int, default=0)
@click.option("--size", default=None, help="Output mask size HxW.")
@click.option("--keep-prob", type=float, default=0.5)
@click.option("--out", "out_path", required=True)
def masks(grid, count, seed, size, keep_prob, out_path):
    """Precompute a mask set and save it with its parameter sidecar."""
    gh, gw = _grid(grid)
    oh, ow = _grid(size) if size else (gh * 16, gw * 16)
    ms = generate_masks(count, (gh, gw), keep_prob, (oh, ow), seed)
    save_maskset(ms, out_path)
    click.echo(f"{ms.count} masks of {oh}x{ow} saved to {out_path}")


@main.command()
@click.option("--root", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", required=True,
              type=click.Choice(["folder_labels", "coco_json", "mask_pngs"]))
@click.option("--id", "dataset_id", default=None)
@click.option("--store", "store_path", default="./runs")
def ingest(root, fmt, dataset_id, store_path):
    """Ingest a dataset layout into a persisted manifest."""
    store = RunStore(store_path)
    manifest = ingest_dataset(root, fmt, dataset_id, store)
    click.echo(f"dataset {manifest.dataset_id}: {len(manifest.items)} items "
               f"({manifest.task.value})")


@main.command()
@click.option("--out", "out_dir", required=True)
@click.option("--store", "store_path", default=None,
              help="Also ingest the generated datasets into this store.")
def fixtures(out_dir, store_path):
    """Materialize the bundled fixture datasets (and optionally ingest)."""
    layout = write_fixture_tree(out_dir)
    for task, path in layout.items():
        click.echo(f"{task}: {path}")
    if store_path:
        store = RunStore(store_path)
        for task, path in layout.items():
            manifest = ingest_dataset(path, FIXTURE_FORMATS[task],
                                      f"fixture-{task}", store)
            click.echo(f"ingested fixture-{task}: {len(manifest.items)} items")


def entrypoint(argv=None) -> int:
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2
    except ExplainError as exc:
        click.echo(f"error [{exc.code}]: {exc.message}", err=True)
        return 1


def console_main():
    sys.exit(entrypoint())


if __name__ == "__main__":
    sys.exit(entrypoint())
