"""HTTP surface over the run service.

JSON bodies, quantized boxes on the wire. Invalid state transitions and
concurrent-mutation conflicts both map to 409; rejected plan edits to 422
with the validation report attached.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Form, Request, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from ..guidance import plan_from_json, plan_to_json
from .runs import (
    ConflictError,
    InvalidSketchError,
    InvalidStateError,
    PipelineConfig,
    RunService,
    UnknownRunError,
    ValidationRejectedError,
)

ARTIFACT_MEDIA = {
    "sketch": "image/png",
    "detections": "application/json",
    "plan": "application/json",
    "enhanced": "image/png",
    "enhanced_meta": "application/json",
    "render": "image/png",
    "render_meta": "application/json",
}


def _run_payload(service: RunService, run_id: str) -> dict:
    run = service.get(run_id)
    payload = run.to_json()
    if "plan" in run.artifacts:
        payload["plan"] = plan_to_json(
            plan_from_json(service.store.get_json(run.artifacts["plan"]))
        )
    else:
        payload["plan"] = None
    payload["artifacts"] = {
        name: f"/api/runs/{run_id}/artifacts/{name}" for name in run.artifacts
    }
    return payload


def create_app(service: RunService, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="facade-pipeline")

    @app.exception_handler(UnknownRunError)
    async def _unknown(request: Request, exc: UnknownRunError):
        return JSONResponse({"error": "unknown_run", "detail": str(exc)}, status_code=404)

    @app.exception_handler(InvalidStateError)
    async def _invalid_state(request: Request, exc: InvalidStateError):
        return JSONResponse({"error": "invalid_state", "detail": str(exc)}, status_code=409)

    @app.exception_handler(ConflictError)
    async def _conflict(request: Request, exc: ConflictError):
        return JSONResponse({"error": "conflict", "detail": str(exc)}, status_code=409)

    @app.exception_handler(ValidationRejectedError)
    async def _rejected(request: Request, exc: ValidationRejectedError):
        return JSONResponse(
            {"error": "validation_rejected", "report": exc.report.to_json()},
            status_code=422,
        )

    @app.exception_handler(InvalidSketchError)
    async def _bad_sketch(request: Request, exc: InvalidSketchError):
        return JSONResponse({"error": "invalid_sketch", "detail": str(exc)}, status_code=400)

    @app.get("/api/health")
    def health():
        return {"ok": True}

    @app.post("/api/runs", status_code=201)
    async def create_run(sketch: UploadFile, brief: str = Form(""),
                         config: str | None = Form(None)):
        try:
            cfg = PipelineConfig.from_json(json.loads(config)) if config \
                else PipelineConfig()
        except (ValueError, TypeError) as exc:
            return JSONResponse({"error": "bad_config", "detail": str(exc)},
                                status_code=400)
        data = await sketch.read()
        run = service.create_run(data, brief=brief, config=cfg)
        return {"run_id": run.run_id}

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str):
        return _run_payload(service, run_id)

    @app.post("/api/runs/{run_id}/advance")
    def advance(run_id: str):
        service.advance(run_id)
        return _run_payload(service, run_id)

    @app.post("/api/runs/{run_id}/approve")
    def approve(run_id: str):
        service.approve(run_id)
        return _run_payload(service, run_id)

    @app.post("/api/runs/{run_id}/retry")
    def retry(run_id: str):
        service.retry(run_id)
        return _run_payload(service, run_id)

    @app.patch("/api/runs/{run_id}/plan")
    async def edit_plan(run_id: str, request: Request):
        body = await request.json()
        edit = body.get("edit", body) if isinstance(body, dict) else None
        if not isinstance(edit, dict):
            return JSONResponse({"error": "bad_edit", "detail": "edit must be an object"},
                                status_code=400)
        try:
            plan = service.edit_plan(run_id, edit)
        except ValueError as exc:
            if isinstance(exc, ValidationRejectedError):
                raise
            return JSONResponse({"error": "bad_edit", "detail": str(exc)}, status_code=400)
        return plan_to_json(plan)

    @app.get("/api/runs/{run_id}/artifacts/{stage}")
    def artifact(run_id: str, stage: str):
        if stage not in ARTIFACT_MEDIA:
            return JSONResponse(
                {"error": "unknown_stage", "detail": f"stage must be one of "
                 f"{sorted(ARTIFACT_MEDIA)}"},
                status_code=404,
            )
        try:
            data = service.artifact(run_id, stage)
        except KeyError as exc:
            if isinstance(exc, UnknownRunError):
                raise
            return JSONResponse({"error": "not_ready", "detail": str(exc)}, status_code=404)
        return Response(content=data, media_type=ARTIFACT_MEDIA[stage])

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="studio")

    return app
