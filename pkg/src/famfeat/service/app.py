"""HTTP face of the pipeline: one endpoint per stage.

Paths in requests refer to the service host's filesystem (the usual
deployment pairs the service with shared storage); the bundled CLI talks
to this app in-process by default. User errors (bad parameters, malformed
files) map to 400, validation problems to 422, everything else to 500.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import PipelineConfig, load_config
from ..errors import ConvergenceError, FamfeatError, ParameterError
from ..synth import SynthSpec
from ..dataset import read_json
from .schemas import (
    EvalRequest,
    ExtractRequest,
    HealthResponse,
    PreprocessRequest,
    ReportRequest,
    SelectRequest,
    StageRequest,
    StageResponse,
    SynthRequest,
    TrainRequest,
)

log = logging.getLogger(__name__)


def _resolve_config(req: StageRequest) -> PipelineConfig:
    if req.config is not None:
        config = req.config
    elif req.config_path is not None:
        config = load_config(req.config_path)
    else:
        config = PipelineConfig()
    if req.seed is not None:
        config = config.model_copy(update={"seed": req.seed})
    return config


def create_app() -> FastAPI:
    app = FastAPI(
        title="famfeat",
        description="EEG familiarity-response feature pipeline",
        version=__version__,
    )

    @app.exception_handler(ParameterError)
    async def _parameter_error(request: Request, exc: ParameterError):
        return JSONResponse(
            status_code=400,
            content={"ok": False, "error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(FamfeatError)
    async def _internal_error(request: Request, exc: FamfeatError):
        log.error("stage failed: %s", exc)
        return JSONResponse(
            status_code=500,
            content={"ok": False, "error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/v1/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(version=__version__)

    @app.get("/v1/defaults")
    def defaults() -> dict:
        return PipelineConfig().model_dump(mode="json")

    @app.post("/v1/synth", response_model=StageResponse)
    def synth(req: SynthRequest) -> StageResponse:
        if req.spec is not None:
            spec = req.spec
        else:
            try:
                spec = SynthSpec.model_validate(read_json(req.spec_path))
            except ValueError as err:
                raise ParameterError(f"invalid synthesis spec: {err}") from None
        if req.seed is not None:
            spec = spec.model_copy(update={"seed": req.seed})
        summary = pipeline.run_synth(spec, req.out)
        return StageResponse(stage="synth", summary=summary)

    @app.post("/v1/preprocess", response_model=StageResponse)
    def preprocess(req: PreprocessRequest) -> StageResponse:
        summary = pipeline.run_preprocess(req.in_path, req.out, _resolve_config(req))
        return StageResponse(stage="preprocess", summary=summary)

    @app.post("/v1/extract", response_model=StageResponse)
    def extract(req: ExtractRequest) -> StageResponse:
        summary = pipeline.run_extract(req.in_path, req.out, _resolve_config(req))
        warnings = []
        if summary["missing_values"]:
            warnings.append(
                f"{summary['missing_values']} undefined values written as missing markers"
            )
        return StageResponse(stage="extract", summary=summary, warnings=warnings)

    @app.post("/v1/select", response_model=StageResponse)
    def select(req: SelectRequest) -> StageResponse:
        summary = pipeline.run_select(
            req.in_path, req.class_a, req.class_b, req.out, _resolve_config(req)
        )
        return StageResponse(
            stage="select",
            summary=summary,
            warnings=summary.get("warnings", []),
            partial=bool(summary.get("partial")),
        )

    @app.post("/v1/train", response_model=StageResponse)
    def train(req: TrainRequest) -> StageResponse:
        summary = pipeline.run_train(
            req.in_path,
            req.out,
            _resolve_config(req),
            feature_list=req.features,
            class_a=req.class_a,
            class_b=req.class_b,
            name=req.name,
        )
        return StageResponse(stage="train", summary=summary)

    @app.post("/v1/eval", response_model=StageResponse)
    def eval_(req: EvalRequest) -> StageResponse:
        summary = pipeline.run_eval(req.in_path, req.model, req.out, name=req.name)
        return StageResponse(stage="eval", summary=summary)

    @app.post("/v1/report", response_model=StageResponse)
    def report(req: ReportRequest) -> StageResponse:
        summary = pipeline.run_report(req.evals, req.selections, req.out)
        return StageResponse(stage="report", summary=summary)

    return app


app = create_app()
