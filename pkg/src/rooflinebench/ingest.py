"""Parsing of llama-bench JSON logs and memory traces, and the join that
turns measured runs into roofline points.

Parsers follow a partial-success contract: malformed rows are collected as
errors and every valid row still comes back.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from . import arch as arch_mod
from .arch import ArchConfig, Convention, CostMode, Precision
from .errors import IngestError, JoinError
from .roofline import Provenance, RooflinePoint, to_point

log = logging.getLogger(__name__)


class Scenario(Enum):
    SISO = "SISO"  # short in, short out
    SILO = "SILO"  # short in, long out
    LISO = "LISO"  # long in, short out
    LILO = "LILO"  # long in, long out


# llama-bench quantization labels this tool understands. Unknown labels are
# never guessed at; join() raises listing these.
QUANT_LABELS = {
    "F32": "fp32",
    "FP32": "fp32",
    "F16": "fp16",
    "FP16": "fp16",
    "Q8_0": "q8_0",
    "Q4_K_M": "q4_k_m",
}

_QUANT_TOKEN = re.compile(r"(?i)\b(F16|FP16|F32|FP32|BF16|Q\d_K_[SML]|Q\d_[01K])\b")


@dataclass(frozen=True)
class Thresholds:
    """Token-count boundary between the Short and Long axes."""

    short_max: int = 512
    long_min: int = 513

    def __post_init__(self) -> None:
        if self.short_max >= self.long_min:
            raise IngestError(
                f"short_max ({self.short_max}) must be below long_min ({self.long_min})"
            )


@dataclass(frozen=True)
class MemorySummary:
    peak_bytes: int
    steady_bytes: int
    samples: int

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise IngestError("memory summary needs at least one sample")
        if self.steady_bytes > self.peak_bytes:
            raise IngestError("steady memory cannot exceed peak")


@dataclass(frozen=True)
class RunRecord:
    """One benchmark configuration: model, token counts, and throughputs."""

    model_name: str
    model_n_params: int
    quant_label: str
    n_prompt: int
    n_gen: int
    prefill_tps: float | None = None
    decode_tps: float | None = None
    stddev_ts: float | None = None
    backend: str = ""
    device: str = ""
    timestamp: str = ""
    memory: MemorySummary | None = None

    def __post_init__(self) -> None:
        if self.prefill_tps is None and self.decode_tps is None:
            raise IngestError(f"{self.model_name}: record has neither prefill nor decode TPS")
        if self.n_prompt < 0 or self.n_gen < 0 or (self.n_prompt == 0 and self.n_gen == 0):
            raise IngestError(
                f"{self.model_name}: need non-negative token counts, not both zero "
                f"(got {self.n_prompt}, {self.n_gen})"
            )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "model_name": self.model_name,
            "model_n_params": self.model_n_params,
            "quant_label": self.quant_label,
            "n_prompt": self.n_prompt,
            "n_gen": self.n_gen,
            "prefill_tps": self.prefill_tps,
            "decode_tps": self.decode_tps,
            "stddev_ts": self.stddev_ts,
            "backend": self.backend,
            "device": self.device,
            "timestamp": self.timestamp,
        }
        if self.memory is not None:
            out["memory"] = {
                "peak_bytes": self.memory.peak_bytes,
                "steady_bytes": self.memory.steady_bytes,
                "samples": self.memory.samples,
            }
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        memory = None
        if data.get("memory") is not None:
            memory = MemorySummary(**data["memory"])
        kwargs = {k: v for k, v in data.items() if k != "memory"}
        return cls(memory=memory, **kwargs)


@dataclass(frozen=True)
class RowError:
    row: int
    message: str


@dataclass
class ParseOutcome:
    records: list[RunRecord]
    errors: list[RowError] = field(default_factory=list)


def _row_kind(row: dict[str, Any]) -> str:
    """Prefill vs decode, from an explicit test label or the token counts."""
    label = str(row.get("test", "")).lower()
    if label:
        if "+" in label or label.startswith("tg"):
            return "decode"
        if label.startswith("pp"):
            return "prefill"
    return "prefill" if int(row.get("n_gen", 0) or 0) == 0 else "decode"


def _quant_from_model_type(model_type: str) -> str:
    match = _QUANT_TOKEN.search(model_type)
    return match.group(1).upper() if match else "unknown"


def parse_llama_bench(document: str) -> ParseOutcome:
    """Parse a llama-bench ``-o json`` array into run records.

    Rows sharing (model, n_prompt, n_gen) merge into one record, prompt-
    processing rows filling prefill_tps and generation rows decode_tps.
    Unknown fields are ignored; rows missing required fields become
    collected errors while the rest of the document still parses.
    """
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise IngestError(f"not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise IngestError("llama-bench document must be a JSON array of result objects")
    outcome = ParseOutcome(records=[])
    groups: dict[tuple[str, int, int], dict[str, Any]] = {}
    order: list[tuple[str, int, int]] = []
    for index, row in enumerate(raw):
        if not isinstance(row, dict):
            outcome.errors.append(RowError(index, "row is not an object"))
            continue
        model_name = row.get("model_type") or row.get("model_filename")
        if not model_name:
            outcome.errors.append(RowError(index, "missing model_type/model_filename"))
            continue
        problems = [key for key in ("model_n_params", "avg_ts") if row.get(key) is None]
        if "n_prompt" not in row or "n_gen" not in row:
            problems.append("n_prompt/n_gen")
        if problems:
            outcome.errors.append(RowError(index, f"missing field(s): {', '.join(problems)}"))
            continue
        try:
            n_prompt = int(row["n_prompt"])
            n_gen = int(row["n_gen"])
            avg_ts = float(row["avg_ts"])
            n_params = int(row["model_n_params"])
        except (TypeError, ValueError) as exc:
            outcome.errors.append(RowError(index, f"non-numeric field: {exc}"))
            continue
        key = (str(model_name), n_prompt, n_gen)
        group = groups.get(key)
        if group is None:
            group = {
                "model_name": str(model_name),
                "model_n_params": n_params,
                "quant_label": _quant_from_model_type(str(model_name)),
                "n_prompt": n_prompt,
                "n_gen": n_gen,
                "backend": str(row.get("backend") or row.get("backends") or ""),
                "device": str(row.get("gpu_info") or row.get("cpu_info") or ""),
                "timestamp": str(row.get("test_time", "")),
            }
            groups[key] = group
            order.append(key)
        if _row_kind(row) == "prefill":
            group["prefill_tps"] = avg_ts
        else:
            group["decode_tps"] = avg_ts
            if row.get("stddev_ts") is not None:
                group["stddev_ts"] = float(row["stddev_ts"])
    for key in order:
        try:
            outcome.records.append(RunRecord(**groups[key]))
        except IngestError as exc:
            outcome.errors.append(RowError(-1, str(exc)))
    return outcome


def classify_scenario(n_prompt: int, n_gen: int,
                      thresholds: Thresholds = Thresholds()) -> Scenario:
    """Total partition of (n_prompt, n_gen) into the four sequence patterns."""
    in_short = n_prompt <= thresholds.short_max
    out_short = n_gen <= thresholds.short_max
    if in_short:
        return Scenario.SISO if out_short else Scenario.SILO
    return Scenario.LISO if out_short else Scenario.LILO


class ContextPolicy(Enum):
    """Which context length represents a whole decode sweep."""

    START = "start"
    MID = "mid"
    END = "end"
    INTEGRAL = "integral"  # mean context over all generated tokens


def representative_context(n_prompt: int, n_gen: int,
                           policy: ContextPolicy = ContextPolicy.MID) -> float:
    if policy is ContextPolicy.START:
        n = float(n_prompt)
    elif policy is ContextPolicy.MID:
        n = n_prompt + n_gen / 2.0
    elif policy is ContextPolicy.END:
        n = float(n_prompt + n_gen)
    else:
        # contexts seen while decoding are n_prompt .. n_prompt+n_gen-1; the
        # per-step cost is affine in context, so the mean context is exact
        n = n_prompt + max(0.0, (n_gen - 1) / 2.0)
    return max(1.0, n)


@dataclass(frozen=True)
class JoinOptions:
    kv_precision: Precision = arch_mod.FP16
    cost_mode: CostMode = CostMode.DETAILED
    include_lm_head: bool = True
    include_kv: bool = True
    include_kv_write: bool = True
    context_policy: ContextPolicy = ContextPolicy.MID
    thresholds: Thresholds = Thresholds()
    params_tolerance: float = 0.10


@dataclass(frozen=True)
class JoinedPoints:
    prefill: RooflinePoint | None
    decode: RooflinePoint | None
    scenario: Scenario


def weight_precision_for(quant_label: str) -> Precision:
    key = QUANT_LABELS.get(quant_label.upper())
    if key is None:
        raise JoinError(
            f"unknown quantization label {quant_label!r}; known: {sorted(QUANT_LABELS)}"
        )
    return Precision.of(key)


def join(record: RunRecord, arch: ArchConfig,
         convention: Convention = Convention.FMA,
         options: JoinOptions = JoinOptions()) -> JoinedPoints:
    """Place one run record on the roofline plane using the cost model.

    The decode point costs one step at a representative context length and
    takes latency from 1/decode_tps; the prefill point costs the whole
    prompt at latency n_prompt/prefill_tps.
    """
    rel = abs(arch.n_params - record.model_n_params) / max(1, record.model_n_params)
    if rel > options.params_tolerance:
        raise JoinError(
            f"parameter mismatch joining {record.model_name!r} to {arch.name!r}: "
            f"{record.model_n_params} vs {arch.n_params}"
        )
    weight_precision = weight_precision_for(record.quant_label)
    scenario = classify_scenario(record.n_prompt, record.n_gen, options.thresholds)
    common = dict(
        weight_precision=weight_precision,
        kv_precision=options.kv_precision,
        convention=convention,
        include_lm_head=options.include_lm_head,
        cost_mode=options.cost_mode,
    )
    decode_point = None
    if record.decode_tps is not None:
        n_ctx = representative_context(record.n_prompt, record.n_gen, options.context_policy)
        cost = arch_mod.decode_step_cost(
            arch, n_ctx, include_kv=options.include_kv,
            include_kv_write=options.include_kv_write, **common)
        decode_point = to_point(
            cost, 1.0 / record.decode_tps,
            label=f"{record.model_name}/{record.quant_label}/{scenario.value}/decode",
            provenance=Provenance.MEASURED, scenario=scenario.value)
    prefill_point = None
    if record.prefill_tps is not None and record.n_prompt >= 1:
        cost = arch_mod.sequence_cost(
            arch, record.n_prompt, include_kv=options.include_kv, **common)
        prefill_point = to_point(
            cost, record.n_prompt / record.prefill_tps,
            label=f"{record.model_name}/{record.quant_label}/{scenario.value}/prefill",
            provenance=Provenance.MEASURED, scenario=scenario.value)
    return JoinedPoints(prefill=prefill_point, decode=decode_point, scenario=scenario)


def parse_memory_trace(document: str) -> MemorySummary:
    """Summarize a ``timestamp_ms,rss_bytes`` CSV trace.

    Peak is the maximum RSS; steady state is the median of the final
    quarter of samples. Non-numeric rows are skipped with a logged error;
    non-monotone timestamps only warn.
    """
    reader = csv.reader(io.StringIO(document))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("no samples: empty memory trace") from None
    if [cell.strip() for cell in header[:2]] != ["timestamp_ms", "rss_bytes"]:
        raise IngestError(
            f"memory trace must start with header 'timestamp_ms,rss_bytes', got {header!r}"
        )
    rows: list[tuple[float, int]] = []
    last_ts = None
    for lineno, cells in enumerate(reader, start=2):
        if not cells or all(not c.strip() for c in cells):
            continue
        try:
            ts = float(cells[0])
            rss = int(float(cells[1]))
        except (ValueError, IndexError):
            log.error("memory trace line %d is not numeric, skipping: %r", lineno, cells)
            continue
        if last_ts is not None and ts < last_ts:
            log.warning("memory trace timestamps go backwards at line %d", lineno)
        last_ts = ts
        rows.append((ts, rss))
    if not rows:
        raise IngestError("no samples: memory trace has no valid data rows")
    values = [rss for _, rss in rows]
    tail = values[-max(1, len(values) // 4):]
    return MemorySummary(
        peak_bytes=max(values),
        steady_bytes=int(statistics.median(tail)),
        samples=len(values),
    )
