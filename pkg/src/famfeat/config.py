"""Pipeline configuration: validated, hashable and round-trippable.

A single :class:`PipelineConfig` drives every stage. Configs serialize to
canonical JSON (sorted keys), which is also what the provenance sidecars
embed, so a written sidecar re-parses to a config equal to the one used.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from pydantic import BaseModel, Field, field_validator, model_validator

from .errors import DataFormatError


class FilterConfig(BaseModel):
    lo: float = 0.5
    hi: float = 35.0

    @model_validator(mode="after")
    def _ordered(self):
        if not 0 < self.lo < self.hi:
            raise ValueError("filter edges must satisfy 0 < lo < hi")
        return self


class WindowConfig(BaseModel):
    start_s: float = 0.2
    end_s: float = 2.0

    @model_validator(mode="after")
    def _ordered(self):
        if not self.start_s < self.end_s:
            raise ValueError("window start must precede end")
        return self


class IcaConfig(BaseModel):
    enabled: bool = True
    n_components: int | None = None
    max_iter: int = Field(default=500, ge=1)
    tol: float = Field(default=1e-4, gt=0)
    eog_threshold: float = Field(default=0.7, gt=0, lt=1)
    remove_override: list[int] | None = None


class FeatureConfig(BaseModel):
    statistical_time: bool = True
    frequency: bool = True
    harmonic: bool = True
    wavelet: bool = True
    correlation: bool = True
    wavelet_name: str = "db4"
    wavelet_stats: str = "standardized"
    psd_segment_len: int | None = None
    correlation_pairs: list[tuple[str, str]] | None = None

    @field_validator("wavelet_stats")
    @classmethod
    def _stats_mode(cls, v):
        if v not in ("standardized", "central"):
            raise ValueError("wavelet_stats must be 'standardized' or 'central'")
        return v

    def toggles(self) -> dict[str, bool]:
        return {
            "statistical_time": self.statistical_time,
            "frequency": self.frequency,
            "harmonic": self.harmonic,
            "wavelet": self.wavelet,
            "correlation": self.correlation,
        }


class SelectionConfig(BaseModel):
    alpha: float = Field(default=0.01, gt=0, lt=1)
    stage_sizes: tuple[int, int, int] = (500, 100, 20)
    t_test: str = "welch"
    fdr_denominator: str = "squared"
    r: int = 2
    l: int = 1
    wrapper_folds: int = Field(default=5, ge=2)
    wrapper_sigma: float = Field(default=1.0, gt=0)
    wrapper_C: float = Field(default=1.0, gt=0)

    @field_validator("t_test")
    @classmethod
    def _t_mode(cls, v):
        if v not in ("welch", "pooled"):
            raise ValueError("t_test must be 'welch' or 'pooled'")
        return v

    @field_validator("fdr_denominator")
    @classmethod
    def _fdr_mode(cls, v):
        if v not in ("squared", "linear"):
            raise ValueError("fdr_denominator must be 'squared' or 'linear'")
        return v

    @model_validator(mode="after")
    def _sizes_and_search(self):
        a, b, c = self.stage_sizes
        if not a > b > c >= 1:
            raise ValueError("stage sizes must be strictly decreasing and positive")
        if not self.r > self.l >= 1:
            raise ValueError("need r > l >= 1")
        return self


class SvmConfig(BaseModel):
    C: float = Field(default=1.0, gt=0)
    # kernel width used when the search is skipped; refined searches on
    # standardized features typically settle in the 0.8-0.9 range
    sigma_default: float = Field(default=0.85, gt=0)
    sigma_grid: list[float] | None = None
    refine_steps: int = Field(default=3, ge=0)
    cv_folds: int = Field(default=5, ge=2)

    @field_validator("sigma_grid")
    @classmethod
    def _positive_grid(cls, v):
        if v is not None and (not v or any(s <= 0 for s in v)):
            raise ValueError("sigma grid must be nonempty and positive")
        return v


class PipelineConfig(BaseModel):
    filter: FilterConfig = Field(default_factory=FilterConfig)
    window: WindowConfig = Field(default_factory=WindowConfig)
    ica: IcaConfig = Field(default_factory=IcaConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    svm: SvmConfig = Field(default_factory=SvmConfig)
    seed: int = 0

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataFormatError("config file not found", path=str(path)) from None
    except json.JSONDecodeError as err:
        raise DataFormatError(f"invalid JSON: {err.msg}", path=str(path), line=err.lineno) from None
    try:
        return PipelineConfig.model_validate(raw)
    except Exception as err:
        raise DataFormatError(f"invalid config: {err}", path=str(path)) from None


def save_config(config: PipelineConfig, path) -> None:
    Path(path).write_text(config.canonical_json(), encoding="utf-8")
