"""Bundled reference data: evaluated-device profiles, model architectures,
and a golden llama-bench log for smoke tests and demos."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .arch import ArchConfig
from .errors import ConfigError
from .ingest import RunRecord
from .roofline import HardwareProfile


def _read_text(filename: str) -> str:
    return resources.files("rooflinebench.data").joinpath(filename).read_text("utf-8")


@lru_cache(maxsize=None)
def hardware_catalog() -> dict[str, HardwareProfile]:
    entries = json.loads(_read_text("hardware_catalog.json"))
    catalog = {}
    for entry in entries:
        profile = HardwareProfile.from_dict(entry)
        catalog[profile.name] = profile
    return catalog


@lru_cache(maxsize=None)
def architecture_catalog() -> dict[str, ArchConfig]:
    entries = json.loads(_read_text("architecture_catalog.json"))
    catalog = {}
    for entry in entries:
        arch = ArchConfig.from_dict(entry)
        catalog[arch.name] = arch
    return catalog


def _lookup(catalog: dict, name: str, what: str):
    if name in catalog:
        return catalog[name]
    folded = {key.lower(): value for key, value in catalog.items()}
    if name.lower() in folded:
        return folded[name.lower()]
    matches = [key for key in catalog if name.lower() in key.lower()]
    if len(matches) == 1:
        return catalog[matches[0]]
    raise ConfigError(
        f"no {what} named {name!r} in the bundled catalog; available: {sorted(catalog)}"
    )


def get_profile(name: str) -> HardwareProfile:
    return _lookup(hardware_catalog(), name, "hardware profile")


def get_arch(name: str) -> ArchConfig:
    return _lookup(architecture_catalog(), name, "architecture")


def bundled_llama_bench() -> str:
    """The golden llama-bench JSON log (Apple M1 Pro scenario grid)."""
    return _read_text("llama_bench_m1pro.json")


def resolve_arch_for_record(record: RunRecord, tolerance: float = 0.10) -> ArchConfig:
    """Best catalog architecture for a parsed run, by parameter count.

    Prefers a name match among candidates within the parameter tolerance.
    """
    candidates = [
        arch for arch in architecture_catalog().values()
        if abs(arch.n_params - record.model_n_params) <= tolerance * record.model_n_params
    ]
    if not candidates:
        raise ConfigError(
            f"no catalog architecture within {tolerance:.0%} of "
            f"{record.model_n_params} parameters for {record.model_name!r}"
        )
    lowered = record.model_name.lower()
    named = [a for a in candidates if a.name.lower() in lowered
             or lowered.split(" ")[0] in a.name.lower()]
    pool = named or candidates
    return min(pool, key=lambda a: abs(a.n_params - record.model_n_params))
