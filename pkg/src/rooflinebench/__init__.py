"""Roofline characterization of on-device LLM decoding.

Core pieces: analytical FLOPs/traffic cost models for six attention
mechanisms (arch), hardware ceilings and headroom metrics (roofline),
host probes (hwprobe), llama-bench ingestion (ingest), and reporting
(report). A FastAPI service wraps it all; the CLI is a thin client.
"""

__version__ = "0.1.0"

from .arch import (ArchConfig, AttentionKind, Convention, CostBreakdown, CostMode,
                   FfnKind, Precision, attention_flops_sequence, decode_step_cost,
                   kv_cache_elements_per_layer, scale_layers)
from .roofline import (Basis, HardwareProfile, PhiResult, PhiSpace, PredictedTiming,
                       Regime, RidgePoint, RooflinePoint, attainable, classify, phi,
                       predict_decode, ridge, to_point)

__all__ = [
    "__version__",
    "ArchConfig", "AttentionKind", "Convention", "CostBreakdown", "CostMode",
    "FfnKind", "Precision", "attention_flops_sequence", "decode_step_cost",
    "kv_cache_elements_per_layer", "scale_layers",
    "Basis", "HardwareProfile", "PhiResult", "PhiSpace", "PredictedTiming",
    "Regime", "RidgePoint", "RooflinePoint", "attainable", "classify", "phi",
    "predict_decode", "ridge", "to_point",
]
