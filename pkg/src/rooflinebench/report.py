"""Sweeps, gap analysis, chart rendering, and tabular export.

Rendering is a pure function of its spec: fixed canvas, fixed float
formatting, stable element order, so identical inputs produce
byte-identical SVG.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

from . import arch as arch_mod
from .arch import ArchConfig, Convention, CostMode, Precision
from .errors import CapabilityError, ConfigError, DomainError, RooflineError
from .ingest import (ContextPolicy, JoinOptions, ParseOutcome, Scenario,
                     join, parse_llama_bench, parse_memory_trace, representative_context)
from .roofline import (Basis, HardwareProfile, PhiResult, PhiSpace,
                       Provenance, RidgePoint, RooflinePoint, attainable, phi, ridge)


class SweepAxis(Enum):
    LAYERS = "layers"
    PRECISION = "precision"
    SCENARIO = "scenario"
    CONTEXT_LENGTH = "context_length"


@dataclass(frozen=True)
class SweepOptions:
    """Knobs shared by all sweep axes; the swept axis overrides its own."""

    weight_precision: Precision = arch_mod.FP16
    kv_precision: Precision = arch_mod.FP16
    convention: Convention = Convention.FMA
    include_lm_head: bool = True
    include_kv: bool = True
    include_kv_write: bool = True
    context_tokens: float = 512.0
    scenario_short_tokens: int = 64
    scenario_long_tokens: int = 2048
    embed_params: int | None = None  # override for layer rescaling


@dataclass(frozen=True)
class SweepSpec:
    axis: SweepAxis
    values: tuple
    arch: ArchConfig
    profile: HardwareProfile
    basis: Basis
    cost_mode: CostMode = CostMode.DETAILED
    ceiling_precision: str = "fp32"
    options: SweepOptions = SweepOptions()

    def __post_init__(self) -> None:
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.axis is SweepAxis.LAYERS and any(v < 1 for v in self.values):
            raise ConfigError("layer counts must be >= 1")
        if self.axis is SweepAxis.CONTEXT_LENGTH and any(v < 1 for v in self.values):
            raise ConfigError("context lengths must be >= 1")


def _sweep_cost(spec: SweepSpec, value):
    opts = spec.options
    common = dict(
        kv_precision=opts.kv_precision,
        convention=opts.convention,
        include_lm_head=opts.include_lm_head,
        include_kv=opts.include_kv,
        include_kv_write=opts.include_kv_write,
        cost_mode=spec.cost_mode,
    )
    if spec.axis is SweepAxis.LAYERS:
        scaled = arch_mod.scale_layers(spec.arch, int(value), embed_params=opts.embed_params)
        return arch_mod.decode_step_cost(
            scaled, opts.context_tokens, opts.weight_precision, **common), None
    if spec.axis is SweepAxis.PRECISION:
        precision = value if isinstance(value, Precision) else Precision.of(str(value))
        return arch_mod.decode_step_cost(
            spec.arch, opts.context_tokens, precision, **common), None
    if spec.axis is SweepAxis.CONTEXT_LENGTH:
        return arch_mod.decode_step_cost(
            spec.arch, float(value), opts.weight_precision, **common), None
    scenario = value if isinstance(value, Scenario) else Scenario(str(value).upper())
    n_prompt = (opts.scenario_short_tokens if scenario in (Scenario.SISO, Scenario.SILO)
                else opts.scenario_long_tokens)
    n_gen = (opts.scenario_short_tokens if scenario in (Scenario.SISO, Scenario.LISO)
             else opts.scenario_long_tokens)
    n_ctx = representative_context(n_prompt, n_gen, ContextPolicy.MID)
    return arch_mod.decode_step_cost(
        spec.arch, n_ctx, opts.weight_precision, **common), scenario.value


def run_sweep(spec: SweepSpec) -> list[RooflinePoint]:
    """One predicted point per sweep value, sitting exactly on the ceiling.

    Performance is attainable(OI) at the spec's ceiling precision and basis,
    so predicted points trace the zero-headroom frontier.
    """
    ridge_point = ridge(spec.profile, spec.ceiling_precision, spec.basis)
    points = []
    for value in spec.values:
        try:
            cost, scenario = _sweep_cost(spec, value)
            oi = cost.oi
            perf = attainable(spec.profile, oi, spec.ceiling_precision, spec.basis)
        except RooflineError as exc:
            raise type(exc)(f"sweep {spec.axis.value}={value!r}: {exc}") from exc
        label_value = value.value if isinstance(value, Enum) else value
        points.append(RooflinePoint(
            oi=oi, perf_gflops=perf,
            label=f"{spec.arch.name}/{spec.axis.value}={label_value}",
            provenance=Provenance.PREDICTED,
            scenario=scenario,
        ).classified(ridge_point))
    return points


@dataclass(frozen=True)
class GapReport:
    """Theoretical-minus-measured differences; absent pairs stay absent."""

    device: str
    bandwidth_gap_gbps: float | None
    compute_gap_gflops: dict[str, float | None]
    ridge_shift: dict[str, dict[str, float | None]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "device": self.device,
            "bandwidth_gap_gbps": self.bandwidth_gap_gbps,
            "compute_gap_gflops": dict(sorted(self.compute_gap_gflops.items())),
            "ridge_shift": {k: self.ridge_shift[k] for k in sorted(self.ridge_shift)},
        }


def gap_analysis(profile: HardwareProfile) -> GapReport:
    """Quantify how far measured ceilings fall short of theoretical ones."""
    bw = profile.bandwidth
    bw_gap = None if bw.measured is None else bw.theoretical - bw.measured
    compute_gaps: dict[str, float | None] = {}
    ridge_shift: dict[str, dict[str, float | None]] = {}
    for precision in sorted(profile.peaks):
        peak = profile.peaks[precision]
        if peak.theoretical is not None and peak.measured is not None:
            compute_gaps[precision] = peak.theoretical - peak.measured
        else:
            compute_gaps[precision] = None
        shift: dict[str, float | None] = {}
        for basis in Basis:
            try:
                shift[basis.value] = ridge(profile, precision, basis).oi_r
            except CapabilityError:
                shift[basis.value] = None
        ridge_shift[precision] = shift
    return GapReport(
        device=profile.name,
        bandwidth_gap_gbps=bw_gap,
        compute_gap_gflops=compute_gaps,
        ridge_shift=ridge_shift,
    )


# -- chart rendering ----------------------------------------------------

SCENARIO_COLORS = {
    "SISO": "#1f77b4",
    "SILO": "#d62728",
    "LISO": "#e6a817",
    "LILO": "#2ca02c",
}
DEFAULT_COLOR = "#555555"
CEILING_COLORS = ("#2160c4", "#c0392b", "#6b4fa0", "#1e8449")

CANVAS_W, CANVAS_H = 960.0, 600.0
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 76.0, 28.0, 46.0, 56.0


@dataclass(frozen=True)
class Ceiling:
    """One bandwidth slope plus its compute roof."""

    label: str
    bandwidth_gbps: float
    peak_gflops: float
    basis: Basis

    def __post_init__(self) -> None:
        if self.bandwidth_gbps <= 0 or self.peak_gflops <= 0:
            raise ConfigError(f"ceiling {self.label!r} needs positive bandwidth and peak")

    @property
    def ridge_oi(self) -> float:
        return self.peak_gflops / self.bandwidth_gbps


@dataclass(frozen=True)
class ChartSpec:
    ceilings: tuple[Ceiling, ...]
    points: tuple[RooflinePoint, ...] = ()
    ridge_markers: tuple[RidgePoint, ...] = ()
    phi_annotations: bool = False
    phi_ridge: RidgePoint | None = None
    title: str = ""

    def __post_init__(self) -> None:
        if not self.ceilings:
            raise ConfigError("chart needs at least one ceiling")


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _decade_bounds(values: list[float]) -> tuple[int, int]:
    lo = math.floor(math.log10(min(values))) - 1
    hi = math.ceil(math.log10(max(values))) + 1
    if hi <= lo:
        hi = lo + 1
    return int(lo), int(hi)


class ChartTransform:
    """Log-log data-to-pixel mapping; exposed so tests can invert geometry."""

    def __init__(self, x_decades: tuple[int, int], y_decades: tuple[int, int]):
        self.x_lo, self.x_hi = x_decades
        self.y_lo, self.y_hi = y_decades
        self.plot_w = CANVAS_W - MARGIN_L - MARGIN_R
        self.plot_h = CANVAS_H - MARGIN_T - MARGIN_B

    def x(self, oi: float) -> float:
        frac = (math.log10(oi) - self.x_lo) / (self.x_hi - self.x_lo)
        return MARGIN_L + frac * self.plot_w

    def y(self, perf: float) -> float:
        frac = (math.log10(perf) - self.y_lo) / (self.y_hi - self.y_lo)
        return MARGIN_T + (1.0 - frac) * self.plot_h

    def invert(self, px: float, py: float) -> tuple[float, float]:
        oi = 10 ** (self.x_lo + (px - MARGIN_L) / self.plot_w * (self.x_hi - self.x_lo))
        perf = 10 ** (self.y_hi - (py - MARGIN_T) / self.plot_h * (self.y_hi - self.y_lo))
        return oi, perf


def chart_transform(spec: ChartSpec) -> ChartTransform:
    ois = [c.ridge_oi for c in spec.ceilings]
    perfs = [c.peak_gflops for c in spec.ceilings]
    for p in spec.points:
        ois.append(p.oi)
        perfs.append(p.perf_gflops)
    for r in spec.ridge_markers:
        ois.append(r.oi_r)
        perfs.append(r.pi)
    return ChartTransform(_decade_bounds(ois), _decade_bounds(perfs))


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def render_chart(spec: ChartSpec) -> str:
    """Deterministic SVG roofline chart.

    Bandwidth ceilings are sloped lines up to their ridge, compute ceilings
    horizontal beyond it; ridge markers are dashed verticals; points are
    circles colored by scenario (hollow when predicted). With
    ``phi_annotations`` each point gets a segment to its headroom target on
    ``phi_ridge``, carrying the data coordinates as data-* attributes.
    """
    tr = chart_transform(spec)
    e: list[str] = []
    e.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_W:.0f}" '
             f'height="{CANVAS_H:.0f}" viewBox="0 0 {CANVAS_W:.0f} {CANVAS_H:.0f}" '
             'font-family="Helvetica, Arial, sans-serif">')
    e.append(f'<rect x="0" y="0" width="{CANVAS_W:.0f}" height="{CANVAS_H:.0f}" fill="#ffffff"/>')
    plot_r = CANVAS_W - MARGIN_R
    plot_b = CANVAS_H - MARGIN_B
    e.append('<defs><clipPath id="plot"><rect x="{0}" y="{1}" width="{2}" height="{3}"/>'
             '</clipPath></defs>'.format(_fmt(MARGIN_L), _fmt(MARGIN_T),
                                         _fmt(tr.plot_w), _fmt(tr.plot_h)))
    if spec.title:
        e.append(f'<text x="{_fmt(CANVAS_W / 2)}" y="24" text-anchor="middle" '
                 f'font-size="15" fill="#222222">{_esc(spec.title)}</text>')
    # decade grid
    for decade in range(tr.x_lo, tr.x_hi + 1):
        x = tr.x(10.0 ** decade)
        e.append(f'<line x1="{_fmt(x)}" y1="{_fmt(MARGIN_T)}" x2="{_fmt(x)}" '
                 f'y2="{_fmt(plot_b)}" stroke="#dddddd" stroke-width="1"/>')
        e.append(f'<text x="{_fmt(x)}" y="{_fmt(plot_b + 18)}" text-anchor="middle" '
                 f'font-size="11" fill="#444444">1e{decade}</text>')
    for decade in range(tr.y_lo, tr.y_hi + 1):
        y = tr.y(10.0 ** decade)
        e.append(f'<line x1="{_fmt(MARGIN_L)}" y1="{_fmt(y)}" x2="{_fmt(plot_r)}" '
                 f'y2="{_fmt(y)}" stroke="#dddddd" stroke-width="1"/>')
        e.append(f'<text x="{_fmt(MARGIN_L - 8)}" y="{_fmt(y + 4)}" text-anchor="end" '
                 f'font-size="11" fill="#444444">1e{decade}</text>')
    e.append(f'<rect x="{_fmt(MARGIN_L)}" y="{_fmt(MARGIN_T)}" width="{_fmt(tr.plot_w)}" '
             f'height="{_fmt(tr.plot_h)}" fill="none" stroke="#333333" stroke-width="1"/>')
    e.append(f'<text x="{_fmt(MARGIN_L + tr.plot_w / 2)}" y="{_fmt(CANVAS_H - 14)}" '
             'text-anchor="middle" font-size="13" fill="#222222">'
             'Operational intensity (FLOPs/Byte)</text>')
    e.append(f'<text x="20" y="{_fmt(MARGIN_T + tr.plot_h / 2)}" text-anchor="middle" '
             f'font-size="13" fill="#222222" transform="rotate(-90 20 '
             f'{_fmt(MARGIN_T + tr.plot_h / 2)})">Performance (GFLOPS)</text>')
    # ceilings
    x_min_oi = 10.0 ** tr.x_lo
    x_max_oi = 10.0 ** tr.x_hi
    for i, ceiling in enumerate(spec.ceilings):
        color = CEILING_COLORS[i % len(CEILING_COLORS)]
        dash = "" if ceiling.basis is Basis.THEORETICAL else ' stroke-dasharray="7,4"'
        oi_r = ceiling.ridge_oi
        pts = (f"{_fmt(tr.x(x_min_oi))},{_fmt(tr.y(x_min_oi * ceiling.bandwidth_gbps))} "
               f"{_fmt(tr.x(oi_r))},{_fmt(tr.y(ceiling.peak_gflops))} "
               f"{_fmt(tr.x(x_max_oi))},{_fmt(tr.y(ceiling.peak_gflops))}")
        e.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                 f'stroke-width="2"{dash} clip-path="url(#plot)"/>')
        e.append(f'<text x="{_fmt(plot_r - 6)}" y="{_fmt(tr.y(ceiling.peak_gflops) - 6)}" '
                 f'text-anchor="end" font-size="11" fill="{color}">'
                 f'{_esc(ceiling.label)}</text>')
    # ridge markers
    for marker in spec.ridge_markers:
        x = tr.x(marker.oi_r)
        e.append(f'<line x1="{_fmt(x)}" y1="{_fmt(MARGIN_T)}" x2="{_fmt(x)}" '
                 f'y2="{_fmt(plot_b)}" stroke="#888888" stroke-width="1" '
                 'stroke-dasharray="4,4"/>')
        e.append(f'<text x="{_fmt(x + 4)}" y="{_fmt(MARGIN_T + 14)}" font-size="10" '
                 f'fill="#666666">ridge {marker.precision} {marker.basis.value} '
                 f'({marker.oi_r:.2f})</text>')
    # phi segments under the points
    if spec.phi_annotations and spec.phi_ridge is not None:
        for point in spec.points:
            result = phi(point, spec.phi_ridge)
            if result.above_ceiling:
                continue
            if result.regime.value == "memory-bound":
                target = (spec.phi_ridge.oi_r, spec.phi_ridge.pi)
            else:
                target = (point.oi, spec.phi_ridge.pi)
            e.append(
                f'<line class="phi" x1="{_fmt(tr.x(point.oi))}" '
                f'y1="{_fmt(tr.y(point.perf_gflops))}" x2="{_fmt(tr.x(target[0]))}" '
                f'y2="{_fmt(tr.y(target[1]))}" stroke="#aaaaaa" stroke-width="1" '
                f'stroke-dasharray="2,3" data-x1="{point.oi:.9g}" '
                f'data-y1="{point.perf_gflops:.9g}" data-x2="{target[0]:.9g}" '
                f'data-y2="{target[1]:.9g}"/>')
    # points
    def best_attainable(oi: float) -> float:
        return max(min(c.peak_gflops, oi * c.bandwidth_gbps) for c in spec.ceilings)

    for point in spec.points:
        color = SCENARIO_COLORS.get(point.scenario or "", DEFAULT_COLOR)
        above = point.perf_gflops > best_attainable(point.oi) * (1.0 + 1e-9)
        cls = ' class="above-ceiling"' if above else ""
        if point.provenance is Provenance.PREDICTED:
            fill, stroke = "none", color
        else:
            fill, stroke = color, "#222222" if not above else "#d62728"
        e.append(f'<circle{cls} cx="{_fmt(tr.x(point.oi))}" cy="{_fmt(tr.y(point.perf_gflops))}" '
                 f'r="4.5" fill="{fill}" stroke="{stroke}" stroke-width="1.5">'
                 f'<title>{_esc(point.label)} (oi={point.oi:.4g}, '
                 f'perf={point.perf_gflops:.4g})</title></circle>')
    e.append("</svg>")
    return "\n".join(e) + "\n"


# -- tabular export -----------------------------------------------------

CSV_HEADER = "label,scenario,oi_flops_per_byte,perf_gflops,regime,phi_raw,phi_log10,provenance"


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.10g}"
    text = str(value)
    if "," in text or '"' in text:
        text = '"' + text.replace('"', '""') + '"'
    return text


def export_csv(points: list[RooflinePoint], phis: list[PhiResult | None]) -> str:
    """Points and their headroom as CSV, one row per point, ordered by label."""
    if len(points) != len(phis):
        raise DomainError(
            f"points and phi lists are misaligned ({len(points)} vs {len(phis)})")
    rows = sorted(zip(points, phis), key=lambda pair: pair[0].label)
    lines = [CSV_HEADER]
    for point, result in rows:
        lines.append(",".join(_csv_cell(v) for v in (
            point.label,
            point.scenario,
            point.oi,
            point.perf_gflops,
            point.regime.value if point.regime else None,
            result.raw if result else None,
            result.log10 if result else None,
            point.provenance.value,
        )))
    return "\n".join(lines) + "\n"


PHI_CSV_HEADER = ("label,scenario,regime,phi_raw,phi_log10,above_ceiling,"
                  "ridge_oi,ridge_pi,basis,precision")


def export_phi_csv(points: list[RooflinePoint], phis: list[PhiResult | None]) -> str:
    if len(points) != len(phis):
        raise DomainError(
            f"points and phi lists are misaligned ({len(points)} vs {len(phis)})")
    rows = sorted(zip(points, phis), key=lambda pair: pair[0].label)
    lines = [PHI_CSV_HEADER]
    for point, result in rows:
        if result is None:
            continue
        oi_r, pi, basis, precision = result.ridge_key
        lines.append(",".join(_csv_cell(v) for v in (
            point.label, point.scenario, result.regime.value, result.raw,
            result.log10, str(result.above_ceiling).lower(), oi_r, pi, basis, precision,
        )))
    return "\n".join(lines) + "\n"


# -- end-to-end analysis -------------------------------------------------


def choose_ceiling_precision(profile: HardwareProfile, basis: Basis,
                             requested: str | None = None) -> str:
    """Requested precision, or the conventional fp16-then-fp32 preference."""
    if requested:
        profile.peak_for(requested, basis)  # raises if absent
        return requested.lower()
    for candidate in ("fp16", "fp32"):
        try:
            profile.peak_for(candidate, basis)
            return candidate
        except CapabilityError:
            continue
    return profile.best_peak(basis)[0]


@dataclass
class AnalysisBundle:
    """Everything `analyze` produces, ready to be written as report files."""

    records: list
    parse_errors: list
    join_errors: list[str]
    points: list[RooflinePoint]
    phis: list[PhiResult]
    ridge: RidgePoint
    gaps: GapReport
    points_csv: str
    phi_csv: str
    gaps_json: str
    svg: str


def analyze_runs(
    arch: ArchConfig,
    profile: HardwareProfile,
    runs_document: str,
    *,
    basis: Basis = Basis.MEASURED,
    ceiling_precision: str | None = None,
    convention: Convention = Convention.FMA,
    join_options: JoinOptions = JoinOptions(),
    phi_space: PhiSpace = PhiSpace.RAW,
    mem_trace: str | None = None,
    title: str | None = None,
) -> AnalysisBundle:
    """Parse measured runs, join them with the cost model, and report.

    Records that fail to join (parameter mismatch, unknown quantization)
    are collected as errors; everything else still lands in the report.
    """
    outcome: ParseOutcome = parse_llama_bench(runs_document)
    records = outcome.records
    if mem_trace is not None:
        summary = parse_memory_trace(mem_trace)
        records = [dataclasses.replace(r, memory=summary) if r.memory is None else r
                   for r in records]
    precision = choose_ceiling_precision(profile, basis, ceiling_precision)
    ridge_point = ridge(profile, precision, basis)
    points: list[RooflinePoint] = []
    phis: list[PhiResult] = []
    join_errors: list[str] = []
    for record in records:
        try:
            joined = join(record, arch, convention, join_options)
        except RooflineError as exc:
            join_errors.append(str(exc))
            continue
        for point in (joined.prefill, joined.decode):
            if point is None:
                continue
            classified = point.classified(ridge_point)
            points.append(classified)
            phis.append(phi(classified, ridge_point, phi_space))
    ceilings = []
    for b in (Basis.THEORETICAL, Basis.MEASURED):
        try:
            peak = profile.peak_for(precision, b)
            bw = profile.bandwidth_for(b)
        except CapabilityError:
            continue
        ceilings.append(Ceiling(
            label=f"{profile.name} {precision} {b.value}",
            bandwidth_gbps=bw, peak_gflops=peak, basis=b))
    markers = []
    for b in (Basis.THEORETICAL, Basis.MEASURED):
        try:
            markers.append(ridge(profile, precision, b))
        except CapabilityError:
            continue
    chart = ChartSpec(
        ceilings=tuple(ceilings),
        points=tuple(points),
        ridge_markers=tuple(markers),
        phi_annotations=True,
        phi_ridge=ridge_point,
        title=title if title is not None else f"{arch.name} on {profile.name}",
    )
    gaps = gap_analysis(profile)
    return AnalysisBundle(
        records=records,
        parse_errors=outcome.errors,
        join_errors=join_errors,
        points=points,
        phis=phis,
        ridge=ridge_point,
        gaps=gaps,
        points_csv=export_csv(points, list(phis)),
        phi_csv=export_phi_csv(points, list(phis)),
        gaps_json=json.dumps(gaps.to_dict(), indent=2) + "\n",
        svg=render_chart(chart),
    )
