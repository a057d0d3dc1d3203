"""Run-wide configuration knobs, loadable from JSON with environment and
flag overrides (flags win over environment, environment over file)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Any

from .arch import Convention, CostMode
from .errors import ConfigError
from .ingest import JoinOptions, Thresholds
from .roofline import PhiSpace

ENV_PREFIX = "ROOFLINEBENCH_"

_FIELDS = {
    "convention": ("mac", "fma"),
    "phi_space": ("raw", "log10"),
    "scenario_boundary": int,
    "cost_mode": ("detailed", "approx"),
    "kv_write_traffic": bool,
    "include_lm_head": bool,
}


@dataclass(frozen=True)
class ToolConfig:
    convention: str = "fma"
    phi_space: str = "raw"
    scenario_boundary: int = 512
    cost_mode: str = "detailed"
    kv_write_traffic: bool = True
    include_lm_head: bool = True

    def __post_init__(self) -> None:
        for name, allowed in _FIELDS.items():
            value = getattr(self, name)
            if isinstance(allowed, tuple):
                if value not in allowed:
                    raise ConfigError(f"config {name} must be one of {allowed}, got {value!r}")
            elif not isinstance(value, allowed) or isinstance(value, bool) != (allowed is bool):
                raise ConfigError(f"config {name} must be {allowed.__name__}, got {value!r}")
        if self.scenario_boundary < 1:
            raise ConfigError("scenario_boundary must be >= 1")

    # -- typed views ---------------------------------------------------

    @property
    def convention_enum(self) -> Convention:
        return Convention.FMA if self.convention == "fma" else Convention.MAC

    @property
    def phi_space_enum(self) -> PhiSpace:
        return PhiSpace(self.phi_space)

    @property
    def cost_mode_enum(self) -> CostMode:
        return CostMode(self.cost_mode)

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(short_max=self.scenario_boundary,
                          long_min=self.scenario_boundary + 1)

    def join_options(self, **overrides) -> JoinOptions:
        base = JoinOptions(
            cost_mode=self.cost_mode_enum,
            include_lm_head=self.include_lm_head,
            include_kv_write=self.kv_write_traffic,
            thresholds=self.thresholds,
        )
        return replace(base, **overrides) if overrides else base

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in _FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ToolConfig":
        unknown = set(data) - set(_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "ToolConfig":
        with open(path, encoding="utf-8") as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(data)

    def with_env(self, environ: dict[str, str] | None = None) -> "ToolConfig":
        """Apply ROOFLINEBENCH_* environment overrides."""
        env = os.environ if environ is None else environ
        overrides: dict[str, Any] = {}
        for name in _FIELDS:
            raw = env.get(ENV_PREFIX + name.upper())
            if raw is None:
                continue
            overrides[name] = _coerce(name, raw)
        return replace(self, **overrides) if overrides else self

    def with_overrides(self, **overrides) -> "ToolConfig":
        """Apply flag-level overrides; None values mean "not given"."""
        cleaned = {k: v for k, v in overrides.items() if v is not None}
        if not cleaned:
            return self
        unknown = set(cleaned) - set(_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        return replace(self, **cleaned)


def _coerce(name: str, raw: str) -> Any:
    kind = _FIELDS[name]
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config {name} must be an integer, got {raw!r}") from None
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config {name} must be a boolean, got {raw!r}")
    return raw


def load_config(path: str | None = None, environ: dict[str, str] | None = None,
                **flag_overrides) -> ToolConfig:
    """File (if any), then environment, then explicit flags."""
    config = ToolConfig.from_file(path) if path else ToolConfig()
    return config.with_env(environ).with_overrides(**flag_overrides)
