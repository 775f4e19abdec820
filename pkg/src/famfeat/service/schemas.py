"""Request and response models of the pipeline service.

Every stage request carries the paths it operates on (resolved on the
server's filesystem), an optional inline configuration or a path to one,
and an optional seed override.
"""

from __future__ import annotations

from pydantic import BaseModel, Field, model_validator

from ..config import PipelineConfig
from ..synth import SynthSpec


class StageRequest(BaseModel):
    config: PipelineConfig | None = None
    config_path: str | None = None
    seed: int | None = None

    @model_validator(mode="after")
    def _single_config_source(self):
        if self.config is not None and self.config_path is not None:
            raise ValueError("give either an inline config or a config_path, not both")
        return self


class SynthRequest(StageRequest):
    spec: SynthSpec | None = None
    spec_path: str | None = None
    out: str

    @model_validator(mode="after")
    def _single_spec_source(self):
        if (self.spec is None) == (self.spec_path is None):
            raise ValueError("give exactly one of spec or spec_path")
        return self


class PreprocessRequest(StageRequest):
    in_path: str = Field(alias="in")
    out: str

    model_config = {"populate_by_name": True}


class ExtractRequest(StageRequest):
    in_path: str = Field(alias="in")
    out: str

    model_config = {"populate_by_name": True}


class SelectRequest(StageRequest):
    in_path: str = Field(alias="in")
    out: str
    class_a: str
    class_b: str

    model_config = {"populate_by_name": True}

    @model_validator(mode="after")
    def _distinct_classes(self):
        if self.class_a == self.class_b:
            raise ValueError("class_a and class_b must differ")
        return self


class TrainRequest(StageRequest):
    in_path: str = Field(alias="in")
    out: str
    features: str | None = None
    class_a: str | None = None
    class_b: str | None = None
    name: str = ""

    model_config = {"populate_by_name": True}

    @model_validator(mode="after")
    def _pair_complete(self):
        if (self.class_a is None) != (self.class_b is None):
            raise ValueError("class_a and class_b must be given together")
        return self


class EvalRequest(StageRequest):
    in_path: str = Field(alias="in")
    out: str
    model: str
    name: str = ""

    model_config = {"populate_by_name": True}


class ReportRequest(StageRequest):
    evals: list[str] = Field(default_factory=list)
    selections: list[str] = Field(default_factory=list)
    out: str


class StageResponse(BaseModel):
    ok: bool = True
    stage: str
    summary: dict
    warnings: list[str] = Field(default_factory=list)
    partial: bool = False


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str
