"""HTTP face of the pipeline, consumed by the explorer UI.

Artifacts are served byte-identical to their on-disk form, so anything the CLI
produced can be fetched unchanged.  Pipeline-running endpoints serialize per
workspace through a process-wide lock; reads are lock-free.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .. import xai
from ..errors import SaxError
from ..promptsynth import IngredientSelection, LlmConfig
from . import pipeline as stages
from . import workspace as ws_paths
from .simulator import parking_scenario
from .workspace import Workspace

_write_lock = threading.Lock()


def _error_response(stage: str, exc: Exception, status: int = 400) -> JSONResponse:
    if isinstance(exc, stages.StageError):
        payload = exc.payload()
    elif isinstance(exc, SaxError):
        payload = {"stage": stage, "code": exc.code, "message": str(exc), "details": {}}
    else:
        payload = {"stage": stage, "code": "error", "message": str(exc), "details": {}}
    return JSONResponse(payload, status_code=status)


def _selection(raw: dict) -> IngredientSelection:
    return IngredientSelection(
        process=bool(raw.get("process")),
        causal=bool(raw.get("causal")),
        xai=bool(raw.get("xai")),
    )


def create_app(workspace_root: str | Path) -> FastAPI:
    ws = Workspace(workspace_root).init()
    app = FastAPI(title="saxkit", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/views/{view}")
    def get_view(view: str):
        artifact = ws_paths.VIEW_ARTIFACTS.get(view)
        if artifact is None:
            return _error_response("views", SaxError(f"unknown view {view!r}"), status=404)
        if not ws.exists(artifact):
            return _error_response("views", SaxError(f"view {view!r} has not been produced yet"),
                                   status=404)
        media = "text/plain" if artifact.endswith(".txt") else "application/json"
        return PlainTextResponse(ws.read_bytes(artifact), media_type=media)

    @app.post("/logs")
    async def post_log(file: UploadFile):
        data = await file.read()
        fmt = "xes" if (file.filename or "").endswith(".xes") else "csv"
        try:
            with _write_lock:
                summary = stages.ingest_stage(ws, source=data, fmt=fmt)
        except Exception as exc:
            return _error_response("ingest", exc)
        return summary

    @app.post("/pipeline")
    async def post_pipeline(request: Request):
        body = await request.json() if await request.body() else {}
        try:
            with _write_lock:
                if body.get("scenario") == "parking":
                    seed = int(body.get("seed", 17))
                    stages.simulate_stage(ws, parking_scenario(seed), seed=seed)
                    flags = stages.parking_flags(seed=seed, ask=bool(body.get("ask")))
                else:
                    flags = stages.PipelineFlags(
                        rules=body.get("rules"),
                        condition=(xai.ConditionSpec(**body["condition"])
                                   if body.get("condition") else None),
                        select=_selection(body.get("select", {"process": True})),
                        question=body.get("question"),
                        seed=int(body.get("seed", 17)),
                        ask=bool(body.get("ask")),
                    )
                manifest = stages.run_pipeline(ws, flags)
        except Exception as exc:
            return _error_response("pipeline", exc)
        return {"manifest": manifest}

    @app.post("/prompt")
    async def post_prompt(request: Request):
        body = await request.json()
        try:
            with _write_lock:
                bundle = stages.prompt_stage(
                    ws, _selection(body.get("select", {})),
                    body.get("question", ""), brevity=bool(body.get("brevity")),
                )
        except Exception as exc:
            return _error_response("prompt", exc)
        return {"prompt": bundle.rendered, "digests": bundle.ingredient_digests}

    @app.post("/ask")
    async def post_ask(request: Request):
        body = await request.json()
        cfg = LlmConfig(
            endpoint_url=body.get("endpoint", ""),
            model_name=body.get("model", "gpt-4"),
            temperature=body.get("temperature"),
            top_p=body.get("top_p"),
            max_tokens=body.get("max_tokens"),
        )
        try:
            with _write_lock:
                explanation = stages.ask_stage(
                    ws, _selection(body.get("select", {})),
                    body.get("question", ""), cfg=cfg, brevity=bool(body.get("brevity")),
                )
        except Exception as exc:
            return _error_response("ask", exc)
        return {
            "explanation": explanation.text,
            "usage": explanation.usage,
            "latency_s": explanation.latency_s,
        }

    return app
