"""Pydantic request/response models for the HTTP service.

Inline payloads mirror the on-disk JSON schemas; most requests accept either
an inline object or the name of a bundled catalog entry.
"""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

BasisName = Literal["theoretical", "measured"]


class BandwidthModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    theoretical: float
    measured: Optional[float] = None


class PeakModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    theoretical: Optional[float] = None
    measured: Optional[float] = None


class ProfileModel(BaseModel):
    """The shared hardware-profile JSON schema."""

    model_config = ConfigDict(extra="forbid")
    name: str
    architecture_class: str
    bandwidth_gbps: BandwidthModel
    peak_gflops: dict[str, PeakModel]
    source: str = ""
    timestamp: str = ""

    def payload(self) -> dict[str, Any]:
        return self.model_dump(exclude_none=True)


class ArchModel(BaseModel):
    """The architecture-definition JSON schema."""

    model_config = ConfigDict(extra="forbid")
    name: str
    attention: str
    hidden_dim: int
    num_layers: int
    n_q: int
    n_k: Optional[int] = None
    n_v: Optional[int] = None
    n_h: Optional[int] = None
    n_c: Optional[int] = None
    d_h: Optional[int] = None
    d_l: Optional[int] = None
    d_c: Optional[int] = None
    d_rope: Optional[int] = None
    d_nope: Optional[int] = None
    ffn_dim: int
    ffn_kind: str
    vocab_size: int
    n_params: int
    tied_embeddings: bool = True

    def payload(self) -> dict[str, Any]:
        return self.model_dump(exclude_none=True)


class ConfigModel(BaseModel):
    """Partial tool configuration; unset fields keep server defaults."""

    model_config = ConfigDict(extra="forbid")
    convention: Optional[Literal["mac", "fma"]] = None
    phi_space: Optional[Literal["raw", "log10"]] = None
    scenario_boundary: Optional[int] = None
    cost_mode: Optional[Literal["detailed", "approx"]] = None
    kv_write_traffic: Optional[bool] = None
    include_lm_head: Optional[bool] = None

    def overrides(self) -> dict[str, Any]:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class _ProfileSource(BaseModel):
    profile: Optional[ProfileModel] = None
    profile_name: Optional[str] = None

    @model_validator(mode="after")
    def _one_profile(self):
        if (self.profile is None) == (self.profile_name is None):
            raise ValueError("give exactly one of profile / profile_name")
        return self


class _ArchSource(BaseModel):
    arch: Optional[ArchModel] = None
    arch_name: Optional[str] = None

    @model_validator(mode="after")
    def _one_arch(self):
        if (self.arch is None) == (self.arch_name is None):
            raise ValueError("give exactly one of arch / arch_name")
        return self


class RidgeRequest(_ProfileSource):
    precision: str = "fp32"
    basis: BasisName = "theoretical"


class RidgeResponse(BaseModel):
    oi_r: float
    pi: float
    basis: BasisName
    precision: str


class AttainableRequest(RidgeRequest):
    oi: float


class AttainableResponse(BaseModel):
    gflops: float
    regime: str


class PredictRequest(_ProfileSource):
    n_params: float
    precision: str = "fp16"
    bytes_per_weight: Optional[float] = None
    basis: BasisName = "theoretical"
    compute_precision: Optional[str] = None


class PredictResponse(BaseModel):
    t_comp_s: float
    t_mem_s: float
    bound_tps: float
    regime: str
    implied_oi: float
    peak_gflops: float
    peak_precision: str


class PointModel(BaseModel):
    oi: float
    perf_gflops: float
    label: str = ""
    provenance: Literal["measured", "predicted"] = "measured"
    regime: Optional[str] = None
    scenario: Optional[str] = None


class RidgeModel(BaseModel):
    oi_r: float
    pi: float
    basis: BasisName
    precision: str


class PhiRequest(BaseModel):
    point: PointModel
    ridge: Optional[RidgeModel] = None
    profile: Optional[ProfileModel] = None
    profile_name: Optional[str] = None
    precision: str = "fp32"
    basis: BasisName = "theoretical"
    space: Literal["raw", "log10"] = "raw"

    @model_validator(mode="after")
    def _one_ridge_source(self):
        sources = sum(x is not None for x in (self.ridge, self.profile, self.profile_name))
        if sources != 1:
            raise ValueError("give exactly one of ridge / profile / profile_name")
        return self


class PhiResponse(BaseModel):
    value: float
    space: str
    regime: str
    raw: float
    log10: float
    above_ceiling: bool


class CostRequest(_ArchSource):
    n_ctx: float = 1.0
    weight_precision: str = "fp16"
    bytes_per_weight: Optional[float] = None
    kv_precision: str = "fp16"
    convention: Literal["mac", "fma"] = "fma"
    include_lm_head: bool = True
    include_kv: bool = True
    include_kv_write: bool = True
    cost_mode: Literal["detailed", "approx"] = "detailed"


class CostResponse(BaseModel):
    flops_attention: float
    flops_linear: float
    flops_ffn: float
    flops_lm_head: float
    bytes_weights: float
    bytes_kv_read: float
    bytes_kv_write: float
    W_total: float
    Q_total: float
    oi: float


class RunRecordModel(BaseModel):
    model_name: str
    model_n_params: int
    quant_label: str
    n_prompt: int
    n_gen: int
    prefill_tps: Optional[float] = None
    decode_tps: Optional[float] = None
    stddev_ts: Optional[float] = None
    backend: str = ""
    device: str = ""
    timestamp: str = ""
    memory: Optional[dict[str, int]] = None


class AnalyzeRequest(_ProfileSource, _ArchSource):
    runs: Any = Field(description="llama-bench JSON text or parsed array")
    mem_trace: Optional[str] = None
    basis: BasisName = "measured"
    ceiling_precision: Optional[str] = None
    config: Optional[ConfigModel] = None
    title: Optional[str] = None


class AnalyzeResponse(BaseModel):
    records: list[RunRecordModel]
    parse_errors: list[str]
    join_errors: list[str]
    points: list[PointModel]
    ridge: RidgeResponse
    gaps: dict[str, Any]
    points_csv: str
    phi_csv: str
    gaps_json: str
    svg: str


class SweepOptionsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    weight_precision: Optional[str] = None
    kv_precision: Optional[str] = None
    include_lm_head: Optional[bool] = None
    include_kv: Optional[bool] = None
    include_kv_write: Optional[bool] = None
    context_tokens: Optional[float] = None
    scenario_short_tokens: Optional[int] = None
    scenario_long_tokens: Optional[int] = None
    embed_params: Optional[int] = None


class SweepRequest(_ProfileSource, _ArchSource):
    axis: Literal["layers", "precision", "scenario", "context_length"]
    values: list[Any]
    basis: BasisName = "theoretical"
    cost_mode: Literal["detailed", "approx"] = "detailed"
    ceiling_precision: str = "fp32"
    convention: Literal["mac", "fma"] = "fma"
    options: Optional[SweepOptionsModel] = None
    render: bool = True


class SweepResponse(BaseModel):
    points: list[PointModel]
    ridge: RidgeResponse
    csv: str
    svg: Optional[str] = None


class CeilingModel(BaseModel):
    label: str
    bandwidth_gbps: float
    peak_gflops: float
    basis: BasisName = "theoretical"


class ChartSpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    ceilings: list[CeilingModel]
    points: list[PointModel] = []
    ridge_markers: list[RidgeModel] = []
    phi_annotations: bool = False
    phi_ridge: Optional[RidgeModel] = None
    title: str = ""


class PlotRequest(BaseModel):
    chart: ChartSpecModel


class PlotResponse(BaseModel):
    svg: str


class CompareRequest(_ProfileSource):
    runs_a: Any
    runs_b: Any
    arch_a: Optional[str] = None
    arch_b: Optional[str] = None
    basis: BasisName = "measured"
    ceiling_precision: Optional[str] = None
    config: Optional[ConfigModel] = None


class CompareEntry(BaseModel):
    label: str
    source: Literal["a", "b"]
    oi: float
    perf_gflops: float
    regime: str
    phi_raw: float
    phi_log10: float


class ComparePair(BaseModel):
    a: str
    b: str
    comparable: bool
    reason: str
    phi_delta_raw: Optional[float] = None


class CompareResponse(BaseModel):
    ridge: RidgeResponse
    entries: list[CompareEntry]
    pairs: list[ComparePair]
    errors: list[str]


class ProbeRequest(BaseModel):
    bandwidth: bool = True
    flops: bool = True
    name: str = "host"
    threads: Optional[int] = None
    buffer_mib: Optional[list[int]] = None
    repetitions: int = 10
    warmup: int = 3
    flops_precision: list[Literal["fp32", "fp64"]] = ["fp32"]
    declared: Optional[ProfileModel] = None


class ProbeResponse(BaseModel):
    profile: dict[str, Any]
    profile_json: str
    bandwidth_gbps: Optional[float]
    flops_gflops: dict[str, float]
    notes: list[str]
    environment: dict[str, str]


class GapsRequest(_ProfileSource):
    pass


class HealthResponse(BaseModel):
    status: str
    version: str
