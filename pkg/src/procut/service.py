"""HTTP facade over the pipeline: start runs, poll progress, fetch reports."""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .domain import (
    EvalExample,
    EvalTask,
    MetricId,
    SegmentationStrategy,
    count_tokens,
    parse_template,
)
from .errors import GatewayError, ProcutError
from .gateway import Gateway
from .pipeline import CompressionConfig, compute_run_id, run_procut
from .segmentation import SegmentationConfig, segment

STAGE_PROGRESS = {
    "queued": 0.0,
    "segmenting": 0.05,
    "attributing": 0.2,
    "pruning": 0.7,
    "evaluating": 0.8,
    "done": 1.0,
    "failed": 1.0,
}


class ExampleModel(BaseModel):
    inputs: dict[str, str] = Field(default_factory=dict)
    reference: str = ""


class SegmentationModel(BaseModel):
    strategy: Literal["predefined", "structural", "llm"] = "structural"
    max_units: int = Field(default=8, ge=1)
    marker: str = "---SEGMENT---"


class ConfigModel(BaseModel):
    ratio: float = Field(ge=0.0, le=1.0)
    estimator: Literal[
        "shap_exact", "shap_mc", "loo", "lasso", "greedy", "llm_ranker", "random"
    ] = "shap_exact"
    segmentation: SegmentationModel = Field(default_factory=SegmentationModel)
    pinned_indices: list[int] = Field(default_factory=list)
    seed: int = 0
    model: str = "default"
    answer_tag: str = "answer"
    estimator_options: dict = Field(default_factory=dict)

    def to_config(self) -> CompressionConfig:
        return CompressionConfig(
            ratio=self.ratio,
            estimator=self.estimator,
            segmentation=SegmentationConfig(
                strategy=SegmentationStrategy(self.segmentation.strategy),
                max_units=self.segmentation.max_units,
                marker=self.segmentation.marker,
            ),
            pinned_indices=frozenset(self.pinned_indices),
            seed=self.seed,
            model=self.model,
            answer_tag=self.answer_tag,
            estimator_options=dict(self.estimator_options),
        )


class RunRequest(BaseModel):
    template: str = Field(min_length=1)
    dataset: list[ExampleModel] = Field(min_length=1)
    metric: Literal["exact_match", "token_f1"] = "token_f1"
    config: ConfigModel


class RunHandle(BaseModel):
    run_id: str
    status: str
    progress: float
    error: str | None = None


class SegmentRequest(BaseModel):
    template: str = Field(min_length=1)
    config: SegmentationModel = Field(default_factory=SegmentationModel)


class _RunState:
    def __init__(self, run_id: str):
        self.run_id = run_id
        self.status = "queued"
        self.progress = 0.0
        self.error: str | None = None
        self.report: dict | None = None

    def handle(self) -> RunHandle:
        return RunHandle(
            run_id=self.run_id,
            status=self.status,
            progress=self.progress,
            error=self.error,
        )


def create_app(
    gateway: Gateway,
    runs_dir: str | Path = "runs",
    max_concurrent_runs: int = 2,
) -> FastAPI:
    app = FastAPI(title="procut", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    runs_dir = Path(runs_dir)
    registry: dict[str, _RunState] = {}
    lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=max_concurrent_runs)
    app.state.executor = executor

    # recover persisted runs; anything in flight at crash time is gone
    if runs_dir.exists():
        for path in sorted(runs_dir.glob("*.json")):
            try:
                report = json.loads(path.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, OSError):
                continue
            state = _RunState(report.get("run_id", path.stem))
            state.status = "done" if report.get("status") == "ok" else "failed"
            state.progress = 1.0
            state.error = report.get("error")
            state.report = report
            registry[state.run_id] = state

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def _advance(state: _RunState, status: str, progress: float):
        with lock:
            state.status = status
            # progress is monotone for a given run
            state.progress = max(state.progress, progress)

    def _execute(state: _RunState, body: RunRequest):
        examples = tuple(
            EvalExample(inputs=e.inputs, reference=e.reference) for e in body.dataset
        )
        task = EvalTask(train=examples, test=examples, metric=MetricId(body.metric))
        try:
            report = run_procut(
                body.template,
                task,
                body.config.to_config(),
                gateway,
                runs_dir=runs_dir,
                on_stage=lambda stage, p: _advance(state, stage, p),
            )
            with lock:
                state.report = report.to_dict()
                state.status = "done"
                state.progress = 1.0
        except Exception as exc:  # noqa: BLE001 - surfaced via the handle
            with lock:
                state.status = "failed"
                state.progress = 1.0
                state.error = f"{type(exc).__name__}: {exc}"
                failed = runs_dir / f"{state.run_id}.json"
                if failed.exists():
                    state.report = json.loads(failed.read_text(encoding="utf-8"))

    @app.post("/api/runs", status_code=202, response_model=RunHandle)
    def post_run(body: RunRequest):
        config = body.config.to_config()
        run_id = compute_run_id(body.template, config)
        with lock:
            existing = registry.get(run_id)
            if existing is not None:
                return JSONResponse(
                    status_code=409, content=existing.handle().model_dump()
                )
            state = _RunState(run_id)
            registry[run_id] = state
        executor.submit(_execute, state, body)
        return state.handle()

    @app.get("/api/runs/{run_id}", response_model=RunHandle)
    def get_run(run_id: str):
        with lock:
            state = registry.get(run_id)
            if state is None:
                return JSONResponse(status_code=404, content={"detail": "unknown run"})
            return state.handle()

    @app.get("/api/runs/{run_id}/report")
    def get_report(run_id: str):
        with lock:
            state = registry.get(run_id)
            if state is None:
                return JSONResponse(status_code=404, content={"detail": "unknown run"})
            if state.report is None:
                return JSONResponse(
                    status_code=409,
                    content={"detail": f"run is {state.status}, report not ready"},
                )
            return state.report

    @app.post("/api/segment")
    def post_segment(body: SegmentRequest):
        cfg = SegmentationConfig(
            strategy=SegmentationStrategy(body.config.strategy),
            max_units=body.config.max_units,
            marker=body.config.marker,
        )
        try:
            template = parse_template(body.template)
            seg = segment(template, cfg, gateway)
        except GatewayError as exc:
            return JSONResponse(status_code=502, content={"detail": str(exc)})
        except ProcutError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return {
            "strategy": seg.strategy.value,
            "segments": [
                {
                    "index": s.index,
                    "text": s.text,
                    "tokens": count_tokens(s.text),
                    "placeholders": list(s.contains_placeholders),
                }
                for s in seg.segments
            ],
        }

    @app.get("/api/schema")
    def get_schema():
        return app.openapi()

    return app
