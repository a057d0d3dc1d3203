"""Roofline ceilings, regime classification, and optimization-headroom metrics.

A hardware profile declares peak compute per precision and memory bandwidth,
each in a theoretical and/or measured variant. Every computation here takes
an explicit basis; theoretical and measured values are never mixed silently.

Units are GFLOPS and GB/s (decimal, 1e9) throughout.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from .arch import CostBreakdown, Precision
from .errors import CapabilityError, ConfigError, DegenerateCostError, DomainError

log = logging.getLogger(__name__)


class ArchitectureClass(Enum):
    DISCRETE_GPU = "DiscreteGPU"
    UNIFIED_SOC = "UnifiedSoC"
    EDGE_AI_MODULE = "EdgeAIModule"
    GENERAL_CPU = "GeneralCPU"


class Basis(Enum):
    THEORETICAL = "theoretical"
    MEASURED = "measured"


class Regime(Enum):
    MEMORY_BOUND = "memory-bound"
    COMPUTE_BOUND = "compute-bound"


class Provenance(Enum):
    MEASURED = "measured"
    PREDICTED = "predicted"


class PhiSpace(Enum):
    RAW = "raw"
    LOG10 = "log10"


PROFILE_JSON_KEYS = ("name", "architecture_class", "bandwidth_gbps", "peak_gflops",
                     "source", "timestamp")


@dataclass(frozen=True)
class Bandwidth:
    theoretical: float
    measured: float | None = None

    def __post_init__(self) -> None:
        if self.theoretical <= 0:
            raise ConfigError("bandwidth_gbps.theoretical must be > 0")
        if self.measured is not None and self.measured <= 0:
            raise ConfigError("bandwidth_gbps.measured must be > 0")

    def for_basis(self, basis: Basis) -> float:
        value = self.theoretical if basis is Basis.THEORETICAL else self.measured
        if value is None:
            raise CapabilityError(f"capability not profiled: {basis.value} bandwidth")
        return value


@dataclass(frozen=True)
class Peak:
    theoretical: float | None = None
    measured: float | None = None

    def __post_init__(self) -> None:
        if self.theoretical is None and self.measured is None:
            raise ConfigError("a declared precision needs a theoretical or measured peak")
        for name in ("theoretical", "measured"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"peak_gflops.{name} must be > 0")


@dataclass(frozen=True)
class HardwareProfile:
    """Compute and bandwidth capabilities of one device.

    ``peaks`` maps lowercase precision names ("fp32", "fp16", ...) to their
    Peak entries. Absent slots stay absent; looking one up raises a
    CapabilityError rather than falling back.
    """

    name: str
    architecture_class: ArchitectureClass
    bandwidth: Bandwidth
    peaks: dict[str, Peak] = field(default_factory=dict)
    source: str = ""
    timestamp: str = ""

    def bandwidth_for(self, basis: Basis) -> float:
        return self.bandwidth.for_basis(basis)

    def peak_for(self, precision: str, basis: Basis) -> float:
        key = precision.lower()
        peak = self.peaks.get(key)
        value = None
        if peak is not None:
            value = peak.theoretical if basis is Basis.THEORETICAL else peak.measured
        if value is None:
            raise CapabilityError(
                f"capability not profiled: {basis.value} {key} peak on {self.name!r}"
            )
        return value

    def best_peak(self, basis: Basis) -> tuple[str, float]:
        """Highest declared peak at the given basis, with its precision name."""
        best: tuple[str, float] | None = None
        for key in sorted(self.peaks):
            peak = self.peaks[key]
            value = peak.theoretical if basis is Basis.THEORETICAL else peak.measured
            if value is not None and (best is None or value > best[1]):
                best = (key, value)
        if best is None:
            raise CapabilityError(
                f"capability not profiled: no {basis.value} compute peak on {self.name!r}"
            )
        return best

    # -- serialization ------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        bw: dict[str, float] = {"theoretical": self.bandwidth.theoretical}
        if self.bandwidth.measured is not None:
            bw["measured"] = self.bandwidth.measured
        peaks: dict[str, dict[str, float]] = {}
        for key in sorted(self.peaks):
            entry: dict[str, float] = {}
            if self.peaks[key].theoretical is not None:
                entry["theoretical"] = self.peaks[key].theoretical
            if self.peaks[key].measured is not None:
                entry["measured"] = self.peaks[key].measured
            peaks[key] = entry
        return {
            "name": self.name,
            "architecture_class": self.architecture_class.value,
            "bandwidth_gbps": bw,
            "peak_gflops": peaks,
            "source": self.source,
            "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        """Canonical form: fixed key order, two-space indent, trailing newline."""
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "HardwareProfile":
        if not isinstance(data, dict):
            raise ConfigError("hardware profile must be a JSON object")
        unknown = set(data) - set(PROFILE_JSON_KEYS)
        if unknown:
            raise ConfigError(f"unknown profile key(s): {sorted(unknown)}")
        for key, expected in (("name", str), ("architecture_class", str),
                              ("bandwidth_gbps", dict), ("peak_gflops", dict),
                              ("source", str), ("timestamp", str)):
            if key not in data:
                raise ConfigError(f"profile missing key {key!r} (expected {expected.__name__})")
            if not isinstance(data[key], expected):
                raise ConfigError(
                    f"profile key {key!r} must be {expected.__name__}, "
                    f"got {type(data[key]).__name__}"
                )
        try:
            arch_class = ArchitectureClass(data["architecture_class"])
        except ValueError:
            raise ConfigError(
                f"unknown architecture_class {data['architecture_class']!r}; "
                f"known: {[c.value for c in ArchitectureClass]}"
            ) from None
        bw_raw = data["bandwidth_gbps"]
        bad = set(bw_raw) - {"theoretical", "measured"}
        if bad:
            raise ConfigError(f"unknown bandwidth_gbps key(s): {sorted(bad)}")
        if "theoretical" not in bw_raw:
            raise ConfigError("profile missing key 'bandwidth_gbps.theoretical' (expected number)")
        for key, value in bw_raw.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"bandwidth_gbps.{key} must be a number, got {value!r}")
        bandwidth = Bandwidth(float(bw_raw["theoretical"]),
                              float(bw_raw["measured"]) if "measured" in bw_raw else None)
        peaks: dict[str, Peak] = {}
        for prec, entry in data["peak_gflops"].items():
            if not isinstance(entry, dict):
                raise ConfigError(f"peak_gflops.{prec} must be an object, got {entry!r}")
            bad = set(entry) - {"theoretical", "measured"}
            if bad:
                raise ConfigError(f"unknown peak_gflops.{prec} key(s): {sorted(bad)}")
            for key, value in entry.items():
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ConfigError(f"peak_gflops.{prec}.{key} must be a number, got {value!r}")
            peaks[prec.lower()] = Peak(
                float(entry["theoretical"]) if "theoretical" in entry else None,
                float(entry["measured"]) if "measured" in entry else None,
            )
        return cls(
            name=data["name"],
            architecture_class=arch_class,
            bandwidth=bandwidth,
            peaks=peaks,
            source=data["source"],
            timestamp=data["timestamp"],
        )

    @classmethod
    def from_json(cls, text: str) -> "HardwareProfile":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class RidgePoint:
    """Where the bandwidth ceiling meets a compute ceiling."""

    oi_r: float  # FLOPs/Byte
    pi: float  # GFLOPS
    basis: Basis
    precision: str

    @property
    def key(self) -> tuple[float, float, str, str]:
        return (self.oi_r, self.pi, self.basis.value, self.precision)


@dataclass(frozen=True)
class RooflinePoint:
    """An (operational intensity, performance) coordinate on the plane."""

    oi: float  # FLOPs/Byte
    perf_gflops: float
    label: str
    provenance: Provenance
    regime: Regime | None = None
    scenario: str | None = None

    def __post_init__(self) -> None:
        if self.oi <= 0 or self.perf_gflops <= 0:
            raise DomainError(
                f"roofline point {self.label!r} needs positive coordinates "
                f"(oi={self.oi}, perf={self.perf_gflops})"
            )

    def classified(self, ridge: RidgePoint) -> "RooflinePoint":
        return replace(self, regime=classify(self.oi, ridge))


@dataclass(frozen=True)
class PhiResult:
    """Headroom of a point relative to a ridge, regime-aware.

    ``raw`` keeps native units (mixed FLOPs/Byte and GFLOPS axes for the
    memory-bound distance); ``log10`` measures in decades, matching log-log
    plots. ``value`` repeats whichever of the two was requested.
    """

    value: float
    space: PhiSpace
    regime: Regime
    raw: float
    log10: float
    ridge_key: tuple[float, float, str, str]
    above_ceiling: bool = False

    def __post_init__(self) -> None:
        if self.value < 0:
            raise DomainError("headroom cannot be negative")

    def comparable_with(self, other: "PhiResult") -> bool:
        """Two headroom values compare only within one regime on one ridge."""
        return self.regime is other.regime and self.ridge_key == other.ridge_key


@dataclass(frozen=True)
class PredictedTiming:
    """Per-token decode bound from parameter count and hardware ceilings."""

    t_comp_s: float
    t_mem_s: float
    regime: Regime
    implied_oi: float
    peak_gflops: float
    peak_precision: str

    @property
    def bound_tps(self) -> float:
        return 1.0 / max(self.t_comp_s, self.t_mem_s)


def ridge(profile: HardwareProfile, precision: str, basis: Basis) -> RidgePoint:
    """Ridge point for one precision at one basis: peak / bandwidth."""
    peak = profile.peak_for(precision, basis)
    bw = profile.bandwidth_for(basis)
    return RidgePoint(oi_r=peak / bw, pi=peak, basis=basis, precision=precision.lower())


def ridge_from_values(peak_gflops: float, bandwidth_gbps: float, basis: Basis,
                      precision: str) -> RidgePoint:
    if peak_gflops <= 0 or bandwidth_gbps <= 0:
        raise DomainError("ridge needs positive peak and bandwidth")
    return RidgePoint(peak_gflops / bandwidth_gbps, peak_gflops, basis, precision.lower())


def attainable(profile: HardwareProfile, oi: float, precision: str, basis: Basis) -> float:
    """Attainable GFLOPS at the given operational intensity: min(peak, oi * bw)."""
    if oi <= 0:
        raise DomainError(f"operational intensity must be > 0, got {oi}")
    peak = profile.peak_for(precision, basis)
    bw = profile.bandwidth_for(basis)
    return min(peak, oi * bw)


def classify(oi: float, ridge_point: RidgePoint) -> Regime:
    """Memory-bound strictly left of the ridge; the ridge itself is compute-bound."""
    if oi <= 0:
        raise DomainError(f"operational intensity must be > 0, got {oi}")
    return Regime.MEMORY_BOUND if oi < ridge_point.oi_r else Regime.COMPUTE_BOUND


def phi(point: RooflinePoint, ridge_point: RidgePoint,
        space: PhiSpace = PhiSpace.RAW) -> PhiResult:
    """Headroom of ``point`` against ``ridge_point``.

    Memory-bound points measure the Euclidean distance to the ridge (both
    coordinates must improve); compute-bound points measure the vertical
    distance to the compute ceiling. Points above the ceiling clamp to 0
    and are flagged rather than reporting negative headroom.
    """
    regime = classify(point.oi, ridge_point)
    if point.regime is not None and point.regime is not regime:
        raise DomainError(
            f"point {point.label!r} carries regime {point.regime.value} but classifies "
            f"as {regime.value} against this ridge"
        )
    oi_r, pi = ridge_point.oi_r, ridge_point.pi
    above = point.perf_gflops > pi
    if above:
        log.warning("point %r sits above the %s %s ceiling (%.3f > %.3f GFLOPS)",
                    point.label, ridge_point.basis.value, ridge_point.precision,
                    point.perf_gflops, pi)
        raw_value = 0.0
        log_value = 0.0
    elif regime is Regime.MEMORY_BOUND:
        raw_value = math.hypot(oi_r - point.oi, pi - point.perf_gflops)
        log_value = math.hypot(math.log10(oi_r) - math.log10(point.oi),
                               math.log10(pi) - math.log10(point.perf_gflops))
    else:
        raw_value = pi - point.perf_gflops
        log_value = math.log10(pi) - math.log10(point.perf_gflops)
    value = raw_value if space is PhiSpace.RAW else log_value
    return PhiResult(value=value, space=space, regime=regime, raw=raw_value,
                     log10=log_value, ridge_key=ridge_point.key, above_ceiling=above)


def predict_decode(
    n_params: int,
    precision: Precision,
    profile: HardwareProfile,
    basis: Basis,
    compute_precision: str | None = None,
) -> PredictedTiming:
    """Analytical per-token decode bound from weight streaming vs compute.

    Compute time is 2*n_params over the hardware peak; memory time is the
    weight footprint over bandwidth. When ``compute_precision`` is not
    given, the highest peak declared at the basis stands in for the
    hardware peak (the two-FLOPs-per-parameter rule is precision-agnostic).
    """
    if n_params <= 0:
        raise DomainError(f"n_params must be positive, got {n_params}")
    if compute_precision is None:
        peak_precision, peak = profile.best_peak(basis)
    else:
        peak_precision = compute_precision.lower()
        peak = profile.peak_for(peak_precision, basis)
    bw = profile.bandwidth_for(basis)
    t_comp = 2.0 * n_params / (peak * 1e9)
    t_mem = n_params * precision.bytes_per_weight / (bw * 1e9)
    regime = Regime.MEMORY_BOUND if t_mem > t_comp else Regime.COMPUTE_BOUND
    return PredictedTiming(
        t_comp_s=t_comp,
        t_mem_s=t_mem,
        regime=regime,
        implied_oi=2.0 / precision.bytes_per_weight,
        peak_gflops=peak,
        peak_precision=peak_precision,
    )


def to_point(
    cost: CostBreakdown,
    latency_s: float,
    label: str = "",
    provenance: Provenance = Provenance.MEASURED,
    scenario: str | None = None,
) -> RooflinePoint:
    """Place a cost breakdown on the plane given its per-unit latency."""
    if latency_s <= 0:
        raise DomainError(f"latency must be > 0, got {latency_s}")
    if cost.Q_total <= 0:
        raise DegenerateCostError("cost with zero memory traffic has no operational intensity")
    return RooflinePoint(
        oi=cost.W_total / cost.Q_total,
        perf_gflops=cost.W_total / latency_s / 1e9,
        label=label,
        provenance=provenance,
        scenario=scenario,
    )


def potential_region(point: RooflinePoint,
                     ridge_point: RidgePoint) -> tuple[tuple[float, float], ...]:
    """Vertices of the headroom region between a point and its ceilings.

    Memory-bound: the quadrilateral bounded left by the point's intensity,
    below by its performance, above by the bandwidth slope, and right by
    the ridge. Compute-bound: the vertical segment up to the compute roof.
    Exposed for renderers; no area metric is assigned (the two regimes'
    axes are not commensurable).
    """
    oi_r, pi = ridge_point.oi_r, ridge_point.pi
    if classify(point.oi, ridge_point) is Regime.COMPUTE_BOUND:
        return ((point.oi, point.perf_gflops), (point.oi, pi))
    bandwidth = pi / oi_r
    ceiling_here = min(pi, point.oi * bandwidth)
    return (
        (point.oi, point.perf_gflops),
        (oi_r, point.perf_gflops),
        (oi_r, pi),
        (point.oi, ceiling_here),
    )
