"""Transformer architecture descriptions and the analytical decode cost model.

Covers six attention mechanisms (MHA, GQA, MLA, GVA, GHA, GTA), each with a
closed-form KV-cache size and per-layer FLOP count. Costs are reported per
decode step as a CostBreakdown of FLOPs (W) and bytes moved (Q); operational
intensity is W/Q.

All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from .errors import ConfigError, DomainError


class AttentionKind(Enum):
    """Attention mechanism family. Exactly one per architecture."""

    MHA = "MHA"
    GQA = "GQA"
    MLA = "MLA"
    GVA = "GVA"
    GHA = "GHA"
    GTA = "GTA"


class FfnKind(Enum):
    GATED = "gated"  # 3 matmuls (gate/up/down)
    PLAIN = "plain"  # 2 matmuls (up/down)


class Convention(Enum):
    """FLOP counting convention.

    MAC counts one unit per multiply-accumulate (table-verbatim);
    FMA counts two, which is what hardware peak figures use.
    """

    MAC = 1
    FMA = 2

    @property
    def factor(self) -> int:
        return self.value


class CostMode(Enum):
    DETAILED = "detailed"  # per-layer attention/linear/FFN breakdown
    APPROX = "approx"  # one MAC per parameter per token


# Default bytes-per-weight. Quantized values follow GGUF block layouts:
# Q8_0 stores 34 bytes per 32 weights, Q4_K_M averages ~4.5 bits/weight.
PRECISION_BYTES = {
    "fp32": 4.0,
    "fp16": 2.0,
    "q8_0": 1.0625,
    "q4_k_m": 0.5625,
}


@dataclass(frozen=True)
class Precision:
    """A numeric storage format and its cost in bytes per element."""

    kind: str
    bytes_per_weight: float

    def __post_init__(self) -> None:
        if not (0.0 < self.bytes_per_weight <= 8.0):
            raise ConfigError(
                f"bytes_per_weight must be in (0, 8], got {self.bytes_per_weight}"
            )

    @classmethod
    def of(cls, kind: str, bytes_per_weight: float | None = None) -> "Precision":
        """Build a precision from its kind name, using default byte costs.

        A custom kind requires an explicit bytes_per_weight.
        """
        key = kind.lower()
        if bytes_per_weight is not None:
            return cls(key, float(bytes_per_weight))
        if key not in PRECISION_BYTES:
            raise ConfigError(
                f"unknown precision {kind!r}; known: {sorted(PRECISION_BYTES)} "
                "(custom kinds need an explicit bytes_per_weight)"
            )
        return cls(key, PRECISION_BYTES[key])


FP32 = Precision.of("fp32")
FP16 = Precision.of("fp16")
Q8_0 = Precision.of("q8_0")
Q4_K_M = Precision.of("q4_k_m")


# JSON schema keys for an architecture definition, in canonical order.
ARCH_JSON_KEYS = (
    "name",
    "attention",
    "hidden_dim",
    "num_layers",
    "n_q",
    "n_k",
    "n_v",
    "n_h",
    "n_c",
    "d_h",
    "d_l",
    "d_c",
    "d_rope",
    "d_nope",
    "ffn_dim",
    "ffn_kind",
    "vocab_size",
    "n_params",
    "tied_embeddings",
)

# Dimensions each variant actually reads; anything else may be absent.
_REQUIRED_DIMS = {
    AttentionKind.MHA: ("n_q", "d_h"),
    AttentionKind.GQA: ("n_q", "n_k", "d_h"),
    AttentionKind.MLA: ("n_q", "d_c", "d_rope", "d_nope", "d_l"),
    AttentionKind.GVA: ("n_q", "n_k", "d_h"),
    AttentionKind.GHA: ("n_q", "n_k", "n_v", "d_h"),
    AttentionKind.GTA: ("n_q", "n_k", "n_c", "d_h", "d_l"),
}

# Variants whose query heads tile the hidden dimension exactly.
_HEADS_SPAN_HIDDEN = (
    AttentionKind.MHA,
    AttentionKind.GQA,
    AttentionKind.GVA,
    AttentionKind.GHA,
)


@dataclass(frozen=True)
class ArchConfig:
    """Structural parameters of a decoder-only transformer.

    Head-count and dimension fields that the active attention variant does
    not read may be left as None. ``n_h`` (total head count) defaults to
    ``n_q`` when not given.
    """

    name: str
    attention: AttentionKind
    hidden_dim: int
    num_layers: int
    n_q: int
    ffn_dim: int
    ffn_kind: FfnKind
    vocab_size: int
    n_params: int
    n_k: int | None = None
    n_v: int | None = None
    n_h: int | None = None
    n_c: int | None = None
    d_h: int | None = None
    d_l: int | None = None
    d_c: int | None = None
    d_rope: int | None = None
    d_nope: int | None = None
    tied_embeddings: bool = True

    def __post_init__(self) -> None:
        if self.n_h is None:
            object.__setattr__(self, "n_h", self.n_q)
        for name in ("hidden_dim", "num_layers", "n_q", "ffn_dim", "vocab_size", "n_params"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{self.name}: {name} must be positive")
        for name in _REQUIRED_DIMS[self.attention]:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(
                    f"{self.name}: {self.attention.value} requires field {name!r}"
                )
            minimum = 0 if name in ("d_rope", "d_nope") else 1
            if value < minimum:
                raise ConfigError(f"{self.name}: {name} must be >= {minimum}, got {value}")
        if self.attention in _HEADS_SPAN_HIDDEN:
            if self.n_q * self.d_h != self.hidden_dim:  # type: ignore[operator]
                raise ConfigError(
                    f"{self.name}: n_q*d_h = {self.n_q}*{self.d_h} must equal "
                    f"hidden_dim = {self.hidden_dim} for {self.attention.value}"
                )
        if self.attention is AttentionKind.GQA:
            assert self.n_k is not None
            if self.n_k > self.n_q or self.n_q % self.n_k != 0:
                raise ConfigError(
                    f"{self.name}: GQA needs n_k <= n_q and n_q divisible by n_k "
                    f"(got n_q={self.n_q}, n_k={self.n_k})"
                )
        if self.attention is AttentionKind.MLA:
            if (self.d_rope or 0) + (self.d_nope or 0) <= 0:
                raise ConfigError(f"{self.name}: MLA requires d_rope + d_nope > 0")

    # -- serialization ------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        """Dict form using the architecture-file key set; unused fields omitted."""
        out: dict[str, Any] = {
            "name": self.name,
            "attention": self.attention.value,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "n_q": self.n_q,
        }
        for key in ("n_k", "n_v", "n_h", "n_c", "d_h", "d_l", "d_c", "d_rope", "d_nope"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        out["ffn_dim"] = self.ffn_dim
        out["ffn_kind"] = self.ffn_kind.value
        out["vocab_size"] = self.vocab_size
        out["n_params"] = self.n_params
        out["tied_embeddings"] = self.tied_embeddings
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ArchConfig":
        unknown = set(data) - set(ARCH_JSON_KEYS)
        if unknown:
            raise ConfigError(f"unknown architecture key(s): {sorted(unknown)}")
        for key in ("name", "attention", "hidden_dim", "num_layers", "n_q",
                    "ffn_dim", "ffn_kind", "vocab_size", "n_params"):
            if key not in data:
                raise ConfigError(f"architecture definition missing key {key!r}")
        try:
            attention = AttentionKind(data["attention"])
        except ValueError:
            raise ConfigError(
                f"unknown attention kind {data['attention']!r}; "
                f"known: {[k.value for k in AttentionKind]}"
            ) from None
        try:
            ffn_kind = FfnKind(data["ffn_kind"])
        except ValueError:
            raise ConfigError(f"unknown ffn_kind {data['ffn_kind']!r}") from None
        kwargs = {k: data[k] for k in data if k not in ("attention", "ffn_kind")}
        return cls(attention=attention, ffn_kind=ffn_kind, **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ArchConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CostBreakdown:
    """FLOPs and bytes moved for one unit of work (usually one decode step).

    W_total is the sum of the four FLOP fields, Q_total the sum of the three
    byte fields; both are enforced at construction.
    """

    flops_attention: float
    flops_linear: float
    flops_ffn: float
    flops_lm_head: float
    bytes_weights: float
    bytes_kv_read: float
    bytes_kv_write: float

    def __post_init__(self) -> None:
        for name in ("flops_attention", "flops_linear", "flops_ffn", "flops_lm_head",
                     "bytes_weights", "bytes_kv_read", "bytes_kv_write"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")

    @property
    def W_total(self) -> float:
        return self.flops_attention + self.flops_linear + self.flops_ffn + self.flops_lm_head

    @property
    def Q_total(self) -> float:
        return self.bytes_weights + self.bytes_kv_read + self.bytes_kv_write

    @property
    def oi(self) -> float:
        """Operational intensity W/Q in FLOPs/Byte."""
        if self.Q_total <= 0:
            raise DomainError("operational intensity undefined for zero memory traffic")
        return self.W_total / self.Q_total

    def to_dict(self) -> dict[str, float]:
        return {
            "flops_attention": self.flops_attention,
            "flops_linear": self.flops_linear,
            "flops_ffn": self.flops_ffn,
            "flops_lm_head": self.flops_lm_head,
            "bytes_weights": self.bytes_weights,
            "bytes_kv_read": self.bytes_kv_read,
            "bytes_kv_write": self.bytes_kv_write,
            "W_total": self.W_total,
            "Q_total": self.Q_total,
        }


# -- per-variant closed forms -----------------------------------------


def kv_elements_per_token(arch: ArchConfig) -> int:
    """KV-cache elements appended per token, per layer, for the active variant."""
    a = arch
    if a.attention is AttentionKind.MHA:
        return 2 * a.n_h * a.d_h  # type: ignore[operator]
    if a.attention is AttentionKind.GQA:
        return 2 * a.n_k * a.d_h  # type: ignore[operator]
    if a.attention is AttentionKind.MLA:
        return a.d_c + a.d_rope  # type: ignore[operator]
    if a.attention is AttentionKind.GVA:
        return a.hidden_dim + a.n_k * a.d_h  # type: ignore[operator]
    if a.attention is AttentionKind.GHA:
        return a.n_k * a.d_h + a.n_v * a.d_h  # type: ignore[operator]
    if a.attention is AttentionKind.GTA:
        return a.n_k * a.d_h + a.n_c * a.d_l  # type: ignore[operator]
    raise ConfigError(f"unhandled attention kind {a.attention}")


def kv_cache_elements_per_layer(arch: ArchConfig, n_ctx: float) -> float:
    """Closed-form KV-cache element count for one layer at context length n_ctx.

    Returns an exact integer for integral n_ctx; 0 when n_ctx is 0.
    """
    if n_ctx < 0:
        raise DomainError(f"context length must be >= 0, got {n_ctx}")
    return kv_elements_per_token(arch) * n_ctx


def attention_macs_per_token_pair(arch: ArchConfig) -> int:
    """MACs attributable to one (query, key) position pair, summed over heads.

    The full-sequence attention cost is this coefficient times N^2; the
    incremental decode-step cost is this coefficient times N.
    """
    a = arch
    if a.attention in (AttentionKind.MHA, AttentionKind.GQA):
        return 2 * a.n_h * a.d_h  # type: ignore[operator]
    if a.attention is AttentionKind.MLA:
        return a.n_h * (a.d_rope + 2 * a.d_nope)  # type: ignore[operator]
    if a.attention in (AttentionKind.GVA, AttentionKind.GHA):
        return a.n_q * a.d_h + a.n_h * a.d_h  # type: ignore[operator]
    if a.attention is AttentionKind.GTA:
        # The score head dimension is taken to be d_h (the key head size).
        return a.n_q * (a.d_h + a.d_l)  # type: ignore[operator]
    raise ConfigError(f"unhandled attention kind {a.attention}")


def attention_flops_sequence(
    arch: ArchConfig, n_ctx: float, convention: Convention = Convention.FMA
) -> float:
    """Full-sequence (prefill-style) attention FLOPs for one layer.

    Quadratic in sequence length; scaled by the FLOP convention factor.
    """
    if n_ctx < 0:
        raise DomainError(f"sequence length must be >= 0, got {n_ctx}")
    return attention_macs_per_token_pair(arch) * n_ctx * n_ctx * convention.factor


def linear_macs_per_token(arch: ArchConfig) -> int:
    """Projection-layer MACs per token for one layer (the table's Linear column / N)."""
    a = arch
    H = a.hidden_dim
    if a.attention is AttentionKind.MHA:
        return 4 * H * H
    if a.attention in (AttentionKind.GQA, AttentionKind.GVA):
        return 2 * H * H + 2 * a.n_k * a.d_h * H  # type: ignore[operator]
    if a.attention is AttentionKind.MLA:
        return (
            (a.d_c + a.d_rope) * H  # type: ignore[operator]
            + a.n_h * (a.d_rope + a.d_nope) * H  # type: ignore[operator]
            + 2 * a.n_h * a.d_l * a.d_nope  # type: ignore[operator]
            + H * H
        )
    if a.attention is AttentionKind.GHA:
        return H * H + (a.n_q * a.d_h + a.n_k * a.d_h + a.n_v * a.d_h) * H  # type: ignore[operator]
    if a.attention is AttentionKind.GTA:
        return 2 * H * H + (a.n_q * a.d_h + a.n_k * a.d_h + a.n_c * a.d_l + a.d_l) * H  # type: ignore[operator]
    raise ConfigError(f"unhandled attention kind {a.attention}")


def ffn_macs_per_token(arch: ArchConfig) -> int:
    """FFN MACs per token for one layer: 3 matmuls gated, 2 plain."""
    matmuls = 3 if arch.ffn_kind is FfnKind.GATED else 2
    return matmuls * arch.hidden_dim * arch.ffn_dim


def embedding_params(arch: ArchConfig) -> int:
    """Parameters attributed to the embedding block (one H*V matrix when tied)."""
    one = arch.hidden_dim * arch.vocab_size
    return one if arch.tied_embeddings else 2 * one


def decode_step_cost(
    arch: ArchConfig,
    n_ctx: float,
    weight_precision: Precision = FP16,
    kv_precision: Precision = FP16,
    convention: Convention = Convention.FMA,
    include_lm_head: bool = True,
    *,
    include_kv: bool = True,
    include_kv_write: bool = True,
    cost_mode: CostMode = CostMode.DETAILED,
) -> CostBreakdown:
    """Cost of generating one token with n_ctx tokens of context.

    The attention term is incremental (one query against n_ctx cached
    positions), so it is linear in context length. Memory traffic counts a
    full pass over the weights plus KV-cache reads over the whole context
    and the write of the newly appended entry. ``include_kv=False`` gives
    the weights-only view. In APPROX mode the FLOP side collapses to one
    MAC per parameter (the LM head is implicitly part of that count).
    """
    if n_ctx < 1:
        raise DomainError(f"decode step requires context >= 1, got {n_ctx}")
    conv = convention.factor
    if cost_mode is CostMode.APPROX:
        flops_attention = 0.0
        flops_linear = float(arch.n_params) * conv
        flops_ffn = 0.0
        flops_lm_head = 0.0
    else:
        L = arch.num_layers
        flops_attention = L * attention_macs_per_token_pair(arch) * n_ctx * conv
        flops_linear = L * linear_macs_per_token(arch) * conv
        flops_ffn = L * ffn_macs_per_token(arch) * conv
        flops_lm_head = arch.hidden_dim * arch.vocab_size * conv if include_lm_head else 0.0
    bytes_weights = arch.n_params * weight_precision.bytes_per_weight
    bytes_kv_read = 0.0
    bytes_kv_write = 0.0
    if include_kv:
        per_layer = kv_cache_elements_per_layer(arch, n_ctx)
        bytes_kv_read = arch.num_layers * per_layer * kv_precision.bytes_per_weight
        if include_kv_write:
            bytes_kv_write = (
                arch.num_layers * kv_elements_per_token(arch) * kv_precision.bytes_per_weight
            )
    return CostBreakdown(
        flops_attention=flops_attention,
        flops_linear=flops_linear,
        flops_ffn=flops_ffn,
        flops_lm_head=flops_lm_head,
        bytes_weights=bytes_weights,
        bytes_kv_read=bytes_kv_read,
        bytes_kv_write=bytes_kv_write,
    )


def sequence_cost(
    arch: ArchConfig,
    n_tokens: float,
    weight_precision: Precision = FP16,
    kv_precision: Precision = FP16,
    convention: Convention = Convention.FMA,
    include_lm_head: bool = True,
    *,
    include_kv: bool = True,
    cost_mode: CostMode = CostMode.DETAILED,
) -> CostBreakdown:
    """Cost of processing n_tokens in parallel (prefill accounting).

    Attention is quadratic in the batch; projections and FFN scale linearly;
    weights are read once for the whole batch; the KV cache is written for
    every token and read nowhere (scores are computed within the batch).
    """
    if n_tokens < 1:
        raise DomainError(f"sequence cost requires at least 1 token, got {n_tokens}")
    conv = convention.factor
    if cost_mode is CostMode.APPROX:
        flops_attention = 0.0
        flops_linear = float(arch.n_params) * n_tokens * conv
        flops_ffn = 0.0
        flops_lm_head = 0.0
    else:
        L = arch.num_layers
        flops_attention = L * attention_macs_per_token_pair(arch) * n_tokens * n_tokens * conv
        flops_linear = L * linear_macs_per_token(arch) * n_tokens * conv
        flops_ffn = L * ffn_macs_per_token(arch) * n_tokens * conv
        flops_lm_head = arch.hidden_dim * arch.vocab_size * conv if include_lm_head else 0.0
    bytes_weights = arch.n_params * weight_precision.bytes_per_weight
    bytes_kv_write = 0.0
    if include_kv:
        bytes_kv_write = (
            arch.num_layers
            * kv_cache_elements_per_layer(arch, n_tokens)
            * kv_precision.bytes_per_weight
        )
    return CostBreakdown(
        flops_attention=flops_attention,
        flops_linear=flops_linear,
        flops_ffn=flops_ffn,
        flops_lm_head=flops_lm_head,
        bytes_weights=bytes_weights,
        bytes_kv_read=0.0,
        bytes_kv_write=bytes_kv_write,
    )


def scale_layers(
    arch: ArchConfig, new_layers: int, *, embed_params: int | None = None
) -> ArchConfig:
    """Copy of ``arch`` at a different depth, with n_params rescaled.

    Parameters split into an embedding block (H*V tied, 2*H*V untied, or an
    explicit override) plus per-layer blocks that scale linearly with depth.
    Non-integral per-layer counts round to nearest.
    """
    if new_layers < 1:
        raise DomainError(f"layer count must be >= 1, got {new_layers}")
    if new_layers == arch.num_layers:
        return arch
    embed = embedding_params(arch) if embed_params is None else embed_params
    if embed < 0 or embed > arch.n_params:
        raise ConfigError(
            f"{arch.name}: embedding block ({embed}) exceeds n_params ({arch.n_params})"
        )
    per_layer = (arch.n_params - embed) / arch.num_layers
    new_params = int(round(embed + per_layer * new_layers))
    return replace(
        arch,
        name=f"{arch.name}-L{new_layers}",
        num_layers=new_layers,
        n_params=max(1, new_params),
    )


def implied_decode_oi(bytes_per_weight: float, convention: Convention = Convention.FMA) -> float:
    """Weights-only decode operational intensity: convention factor over b_prec."""
    if bytes_per_weight <= 0:
        raise ConfigError("bytes_per_weight must be positive")
    return convention.factor / bytes_per_weight
