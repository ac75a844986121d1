"""HTTP API binding the registries, store, and pipeline for the web UI.

All bodies are JSON (images travel as base64 PNG or multipart). Errors map
to {code, message, stage}; stack traces never cross the boundary.
"""

from __future__ import annotations

import base64
import binascii
import logging
from dataclasses import dataclass
from typing import Optional

from fastapi import FastAPI, Request, UploadFile
from fastapi.responses import JSONResponse, Response

from ..domain import (
    GroundTruth,
    SaliencyMap,
    TargetSpec,
    TaskKind,
    dumps_canonical,
    image_to_png,
    png_to_image,
)
from ..errors import (
    AuthError,
    ExplainError,
    MalformedResponse,
    RateLimited,
    StageError,
    Timeout,
    TransientProviderError,
    UnknownBlob,
    UnknownDataset,
    UnknownMethod,
    UnknownModel,
    UnknownProvider,
    UnknownRecord,
)
from ..lvm import LvmConfig, LvmGateway, default_gateway
from ..methods import MethodRegistry, default_methods
from ..model_zoo import ModelRegistry, default_registry
from ..prompting import ExplanationRequest, render_overlay, run_explanation
from ..textmetrics import evaluate_pairs
from .config import ServiceConfig
from .store import RunStore

logger = logging.getLogger(__name__)

NOT_FOUND = (UnknownModel, UnknownMethod, UnknownBlob, UnknownRecord,
             UnknownDataset, UnknownProvider)
UPSTREAM = (AuthError, RateLimited, Timeout, MalformedResponse,
            TransientProviderError)


@dataclass
class AppState:
    store: RunStore
    models: ModelRegistry
    methods: MethodRegistry
    gateway: LvmGateway
    config: ServiceConfig


def _status_for(exc: ExplainError) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, NOT_FOUND):
        return 404
    if isinstance(cause, UPSTREAM):
        return 502
    return 400


def _error_body(exc: ExplainError, stage: str) -> dict:
    if isinstance(exc, StageError):
        stage = exc.stage
    return {"code": exc.code, "message": exc.message, "stage": stage}


def build_app(state: Optional[AppState] = None,
              config: Optional[ServiceConfig] = None) -> FastAPI:
    if state is None:
        config = config or ServiceConfig()
        store = RunStore(config.store_path)
        state = AppState(
            store=store,
            models=default_registry(),
            methods=default_methods(),
            gateway=default_gateway(blob_resolver=store.get_blob),
            config=config,
        )

    app = FastAPI(title="explainbench", version="0.1.0")
    app.state.bench = state

    from fastapi.middleware.cors import CORSMiddleware
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(ExplainError)
    async def handle_explain_error(request: Request, exc: ExplainError):
        stage = getattr(request.state, "stage", "request")
        return JSONResponse(status_code=_status_for(exc),
                            content=_error_body(exc, stage))

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        logger.exception("unhandled error on %s", request.url.path)
        return JSONResponse(status_code=500, content={
            "code": "internal_error", "message": "unexpected failure",
            "stage": getattr(request.state, "stage", "request"),
        })

    @app.get("/api/v1/health")
    async def health():
        return {"status": "ok"}

    @app.post("/api/v1/images")
    async def upload_image(request: Request, file: UploadFile = None):
        if file is not None:
            data = await file.read()
        else:
            body = await request.json()
            try:
                data = base64.b64decode(body["png_base64"], validate=True)
            except (KeyError, binascii.Error) as exc:
                raise MalformedResponse(f"bad upload body: {exc}") from exc
        image = png_to_image(data)  # validates the pixels
        key = state.store.put_blob(data)
        return {"image_id": key, "height": image.height,
                "width": image.width, "channels": image.channels}

    @app.get("/api/v1/blobs/{key}")
    async def get_blob(key: str):
        data = state.store.get_blob(key)
        media = "image/png" if data[:8] == b"\x89PNG\r\n\x1a\n" \
            else "application/json"
        return Response(content=data, media_type=media)

    @app.get("/api/v1/models")
    async def list_models(task: Optional[str] = None):
        tasks = [TaskKind(task)] if task else list(TaskKind)
        out = []
        for t in tasks:
            out.extend(d.to_json() for d in state.models.list_models(t))
        return {"models": out}

    @app.get("/api/v1/methods")
    async def list_methods(task: Optional[str] = None):
        methods = state.methods.list_methods(TaskKind(task) if task else None)
        return {"methods": [m.to_json() for m in methods]}

    @app.post("/api/v1/predict")
    async def predict(request: Request):
        body = await request.json()
        image = png_to_image(state.store.get_blob(body["image_id"]))
        pred = state.models.predict(body["model_id"], image)
        return {"prediction": pred.to_json()}

    @app.post("/api/v1/saliency")
    async def saliency(request: Request):
        body = await request.json()
        image = png_to_image(state.store.get_blob(body["image_id"]))
        target = TargetSpec.from_json(body["target"])
        smap = state.methods.run(body["method_id"], state.models,
                                 body["model_id"], image, target,
                                 body.get("params") or {})
        saliency_key = state.store.put_blob(
            dumps_canonical(smap.to_json()).encode("utf-8"))
        overlay = render_overlay(image, smap,
                                 float(body.get("alpha",
                                                state.config.overlay_alpha)))
        overlay_key = state.store.put_blob(image_to_png(overlay))
        return {"saliency_id": saliency_key, "overlay_id": overlay_key,
                "saliency": smap.to_json()}

    @app.post("/api/v1/explain")
    async def explain(request: Request):
        body = await request.json()
        lvm_body = body.get("lvm") or {}
        lvm_config = LvmConfig(
            provider=lvm_body.get("provider", state.config.lvm_provider),
            endpoint=lvm_body.get("endpoint", state.config.lvm_endpoint),
            credential_ref=lvm_body.get("credential_ref",
                                        state.config.lvm_credential_ref),
            timeout=float(lvm_body.get("timeout", state.config.lvm_timeout)),
            max_retries=int(lvm_body.get("max_retries",
                                         state.config.lvm_max_retries)),
            max_output_tokens=int(lvm_body.get(
                "max_output_tokens", state.config.lvm_max_output_tokens)),
            model=lvm_body.get("model", state.config.lvm_model),
        )
        target = TargetSpec.from_json(body["target"]) \
            if body.get("target") else None
        req = ExplanationRequest(
            image_ref=body["image_id"],
            task=TaskKind(body["task"]),
            model_id=body["model_id"],
            method_id=body["method_id"],
            target=target,
            ground_truth=GroundTruth.from_json(body["ground_truth"]),
            lvm_config=lvm_config,
            method_params=body.get("params") or {},
            overlay_alpha=float(body.get("alpha",
                                         state.config.overlay_alpha)),
        )
        record = run_explanation(req, registry=state.models,
                                 methods=state.methods, store=state.store,
                                 gateway=state.gateway)
        return {"record": record.to_json()}

    @app.post("/api/v1/evaluate")
    async def evaluate(request: Request):
        body = await request.json()
        task = TaskKind(body["task"])
        report = evaluate_pairs(body["pairs"], task)
        payload = report.to_json()
        payload["task"] = task.value
        record_id = state.store.append_record("metric_report", payload)
        return {"record_id": record_id, "report": report.to_json()}

    @app.get("/api/v1/runs/{record_id}")
    async def get_run(record_id: int):
        return state.store.get_record(record_id)

    @app.get("/api/v1/runs")
    async def list_runs(task: Optional[str] = None,
                        limit: Optional[int] = None):
        records = state.store.list_records(kind=None, task=task, limit=limit)
        return {"records": records}

    return app
