import json
import random
import re

import pytest

from conftest import tiny_arch
from rooflinebench.arch import AttentionKind, decode_step_cost
from rooflinebench.catalog import get_arch, get_profile, bundled_llama_bench, hardware_catalog
from rooflinebench.errors import ConfigError, DomainError
from rooflinebench.report import (Ceiling, ChartSpec, SweepAxis, SweepOptions, SweepSpec,
                                  analyze_runs, chart_transform, choose_ceiling_precision,
                                  export_csv, export_phi_csv, gap_analysis, render_chart,
                                  run_sweep)
from rooflinebench.roofline import (ArchitectureClass, Bandwidth, Basis, HardwareProfile,
                                    Peak, Provenance, RidgePoint, RooflinePoint,
                                    attainable, phi, ridge)

M1 = get_profile("Apple M1 Pro")
QWEN = get_arch("Qwen2.5-1.5B")


# -- sweeps ------------------------------------------------------------------

def test_precision_sweep_oi_strictly_increases():
    spec = SweepSpec(axis=SweepAxis.PRECISION, values=("fp16", "q8_0", "q4_k_m"),
                     arch=QWEN, profile=M1, basis=Basis.MEASURED,
                     ceiling_precision="fp32")
    points = {p.label.rsplit("=", 1)[1]: p for p in run_sweep(spec)}
    assert points["fp16"].oi < points["q8_0"].oi < points["q4_k_m"].oi


def test_layer_sweep_constant_oi_without_embeddings():
    arch = tiny_arch(AttentionKind.GQA, random.Random(1), num_layers=4,
                     n_params=4 * 777)
    spec = SweepSpec(
        axis=SweepAxis.LAYERS, values=(2, 4, 8, 16, 64), arch=arch, profile=M1,
        basis=Basis.MEASURED, ceiling_precision="fp32",
        options=SweepOptions(include_kv=False, include_lm_head=False, embed_params=0))
    ois = [p.oi for p in run_sweep(spec)]
    assert all(oi == ois[0] for oi in ois)


def test_layer_sweep_with_kv_recomputes_per_depth():
    spec = SweepSpec(axis=SweepAxis.LAYERS, values=(2, 4, 8), arch=QWEN, profile=M1,
                     basis=Basis.MEASURED, ceiling_precision="fp32",
                     options=SweepOptions(context_tokens=256.0))
    points = run_sweep(spec)
    from rooflinebench.arch import scale_layers

    for point, layers in zip(points, (2, 4, 8)):
        expected = decode_step_cost(scale_layers(QWEN, layers), 256.0).oi
        assert point.oi == pytest.approx(expected, rel=1e-12)


def test_predicted_points_sit_on_the_ceiling():
    for axis, values in ((SweepAxis.PRECISION, ("fp16", "q8_0", "q4_k_m")),
                         (SweepAxis.LAYERS, (2, 8, 32)),
                         (SweepAxis.CONTEXT_LENGTH, (1, 128, 4096)),
                         (SweepAxis.SCENARIO, tuple(s for s in ("SISO", "SILO", "LISO", "LILO")))):
        spec = SweepSpec(axis=axis, values=values, arch=QWEN, profile=M1,
                         basis=Basis.MEASURED, ceiling_precision="fp32")
        for point in run_sweep(spec):
            assert point.perf_gflops == attainable(M1, point.oi, "fp32", Basis.MEASURED)
            assert point.provenance is Provenance.PREDICTED
            assert point.regime is not None


def test_sweep_errors_carry_the_value():
    spec = SweepSpec(axis=SweepAxis.PRECISION, values=("fp16", "fp13"),
                     arch=QWEN, profile=M1, basis=Basis.MEASURED,
                     ceiling_precision="fp32")
    with pytest.raises(ConfigError, match="fp13"):
        run_sweep(spec)


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(axis=SweepAxis.LAYERS, values=(), arch=QWEN, profile=M1,
                  basis=Basis.MEASURED)
    with pytest.raises(ConfigError):
        SweepSpec(axis=SweepAxis.LAYERS, values=(0,), arch=QWEN, profile=M1,
                  basis=Basis.MEASURED)


# -- gap analysis ----------------------------------------------------------------

def test_gap_analysis_m1_bandwidth():
    report = gap_analysis(M1)
    assert report.bandwidth_gap_gbps == pytest.approx(84.77)
    assert report.compute_gap_gflops["fp32"] == pytest.approx(890.0)
    assert report.compute_gap_gflops["fp16"] is None  # no theoretical fp16
    assert report.ridge_shift["fp32"]["theoretical"] == pytest.approx(25.39, abs=0.01)


def test_gap_analysis_rtx3090_fp32():
    report = gap_analysis(get_profile("NVIDIA RTX 3090"))
    assert report.compute_gap_gflops["fp32"] == pytest.approx(11300.0)


def test_gap_analysis_measured_only_profile():
    profile = HardwareProfile(
        name="meas", architecture_class=ArchitectureClass.GENERAL_CPU,
        bandwidth=Bandwidth(10.0), peaks={"fp32": Peak(None, 5.0)},
        source="", timestamp="")
    report = gap_analysis(profile)
    assert report.bandwidth_gap_gbps is None
    assert report.compute_gap_gflops["fp32"] is None
    assert report.ridge_shift["fp32"]["measured"] is None  # no measured bandwidth
    assert report.ridge_shift["fp32"]["theoretical"] is None  # no theoretical peak


def test_catalog_bandwidth_gaps_nonnegative():
    for profile in hardware_catalog().values():
        report = gap_analysis(profile)
        assert report.bandwidth_gap_gbps is not None
        assert report.bandwidth_gap_gbps >= 0


def test_gap_report_serializes():
    text = json.dumps(gap_analysis(M1).to_dict())
    assert "bandwidth_gap_gbps" in text


# -- chart rendering ----------------------------------------------------------------

def _chart(points=(), phi_ridge=None, phi_annotations=False):
    ceiling = Ceiling(label="m1 fp32 measured", bandwidth_gbps=120.03,
                      peak_gflops=4310.0, basis=Basis.MEASURED)
    markers = (RidgePoint(4310.0 / 120.03, 4310.0, Basis.MEASURED, "fp32"),)
    return ChartSpec(ceilings=(ceiling,), points=tuple(points),
                     ridge_markers=markers, phi_annotations=phi_annotations,
                     phi_ridge=phi_ridge, title="test chart")


def test_render_is_deterministic():
    points = [RooflinePoint(oi=1.0, perf_gflops=100.0, label="a",
                            provenance=Provenance.MEASURED, scenario="SISO"),
              RooflinePoint(oi=50.0, perf_gflops=2000.0, label="b",
                            provenance=Provenance.PREDICTED, scenario="LISO")]
    spec = _chart(points)
    assert render_chart(spec) == render_chart(spec)


def test_render_empty_points_still_valid():
    svg = render_chart(_chart())
    assert svg.startswith("<svg")
    assert svg.rstrip().endswith("</svg>")
    assert "polyline" in svg


def test_chart_needs_a_ceiling():
    with pytest.raises(ConfigError):
        ChartSpec(ceilings=())


def test_phi_segment_terminates_at_ridge():
    r = RidgePoint(4310.0 / 120.03, 4310.0, Basis.MEASURED, "fp32")
    point = RooflinePoint(oi=1.0, perf_gflops=100.0, label="mb",
                          provenance=Provenance.MEASURED, scenario="SISO")
    svg = render_chart(_chart([point], phi_ridge=r, phi_annotations=True))
    match = re.search(r'<line class="phi"[^>]*data-x2="([^"]+)" data-y2="([^"]+)"', svg)
    assert match, svg
    assert float(match.group(1)) == pytest.approx(r.oi_r, rel=1e-8)
    assert float(match.group(2)) == pytest.approx(r.pi, rel=1e-8)
    # and the drawn pixel endpoint matches the transform of (oi_r, pi)
    spec = _chart([point], phi_ridge=r, phi_annotations=True)
    tr = chart_transform(spec)
    pix = re.search(r'<line class="phi"[^>]*x2="([^"]+)" y2="([^"]+)"', svg)
    assert float(pix.group(1)) == pytest.approx(tr.x(r.oi_r), abs=0.01)
    assert float(pix.group(2)) == pytest.approx(tr.y(r.pi), abs=0.01)


def test_compute_bound_phi_segment_is_vertical():
    r = RidgePoint(4310.0 / 120.03, 4310.0, Basis.MEASURED, "fp32")
    point = RooflinePoint(oi=100.0, perf_gflops=2000.0, label="cb",
                          provenance=Provenance.MEASURED)
    svg = render_chart(_chart([point], phi_ridge=r, phi_annotations=True))
    match = re.search(r'<line class="phi"[^>]*data-x2="([^"]+)" data-y2="([^"]+)"', svg)
    assert float(match.group(1)) == pytest.approx(100.0)
    assert float(match.group(2)) == pytest.approx(4310.0)


def test_points_above_every_ceiling_get_flagged():
    point = RooflinePoint(oi=1.0, perf_gflops=4000.0, label="hot",
                          provenance=Provenance.MEASURED)
    svg = render_chart(_chart([point]))
    assert 'class="above-ceiling"' in svg
    ok = RooflinePoint(oi=1.0, perf_gflops=100.0, label="cool",
                       provenance=Provenance.MEASURED)
    assert "above-ceiling" not in render_chart(_chart([ok]))


def test_transform_inverts():
    tr = chart_transform(_chart())
    for oi, perf in ((0.5, 10.0), (35.9, 4310.0)):
        back = tr.invert(tr.x(oi), tr.y(perf))
        assert back[0] == pytest.approx(oi, rel=1e-9)
        assert back[1] == pytest.approx(perf, rel=1e-9)


# -- CSV export -----------------------------------------------------------------------

def test_export_csv_header_only_when_empty():
    text = export_csv([], [])
    assert text.splitlines() == [
        "label,scenario,oi_flops_per_byte,perf_gflops,regime,phi_raw,phi_log10,provenance"]


def test_export_csv_single_point_two_lines():
    point = RooflinePoint(oi=1.5, perf_gflops=100.0, label="one",
                          provenance=Provenance.MEASURED)
    assert len(export_csv([point], [None]).splitlines()) == 2


def test_export_csv_round_trips_six_significant_digits():
    r = RidgePoint(35.9, 4310.0, Basis.MEASURED, "fp32")
    points, phis = [], []
    rng = random.Random(3)
    for i in range(12):
        point = RooflinePoint(
            oi=rng.uniform(0.01, 100.0), perf_gflops=rng.uniform(0.1, 4000.0),
            label=f"p{i:02d}", provenance=Provenance.MEASURED).classified(r)
        points.append(point)
        phis.append(phi(point, r))
    lines = export_csv(points, phis).splitlines()[1:]
    parsed = {row.split(",")[0]: row.split(",") for row in lines}
    for point, result in zip(points, phis):
        cells = parsed[point.label]
        assert float(cells[2]) == pytest.approx(point.oi, rel=1e-6)
        assert float(cells[3]) == pytest.approx(point.perf_gflops, rel=1e-6)
        assert float(cells[5]) == pytest.approx(result.raw, rel=1e-6)
        assert float(cells[6]) == pytest.approx(result.log10, rel=1e-6)


def test_export_csv_sorted_by_label_and_misalignment_errors():
    a = RooflinePoint(oi=1.0, perf_gflops=1.0, label="zz", provenance=Provenance.MEASURED)
    b = RooflinePoint(oi=1.0, perf_gflops=1.0, label="aa", provenance=Provenance.MEASURED)
    lines = export_csv([a, b], [None, None]).splitlines()
    assert lines[1].startswith("aa")
    with pytest.raises(DomainError, match="misaligned"):
        export_csv([a], [])
    with pytest.raises(DomainError):
        export_phi_csv([a], [])


# -- analyze orchestration ---------------------------------------------------------------

def test_analyze_bundle_end_to_end():
    bundle = analyze_runs(QWEN, M1, bundled_llama_bench())
    assert len(bundle.records) == 16
    assert len(bundle.join_errors) == 4  # PLM rows do not join a Qwen arch
    assert len(bundle.points) == 24  # 12 qwen records x (prefill + decode)
    assert len(bundle.phis) == len(bundle.points)
    assert bundle.ridge.precision == "fp16"
    assert bundle.ridge.basis is Basis.MEASURED
    assert bundle.points_csv.count("\n") == len(bundle.points) + 1
    assert bundle.svg.startswith("<svg")
    gaps = json.loads(bundle.gaps_json)
    assert gaps["bandwidth_gap_gbps"] == pytest.approx(84.77)


def test_analyze_attaches_memory_trace():
    trace = "timestamp_ms,rss_bytes\n0,1000\n1,2000\n"
    bundle = analyze_runs(QWEN, M1, bundled_llama_bench(), mem_trace=trace)
    assert all(r.memory is not None for r in bundle.records)
    assert bundle.records[0].memory.peak_bytes == 2000


def test_choose_ceiling_precision_prefers_fp16_then_fp32():
    assert choose_ceiling_precision(M1, Basis.MEASURED) == "fp16"
    assert choose_ceiling_precision(M1, Basis.THEORETICAL) == "fp32"
    assert choose_ceiling_precision(M1, Basis.MEASURED, "fp32") == "fp32"
    from rooflinebench.errors import CapabilityError

    with pytest.raises(CapabilityError):
        choose_ceiling_precision(M1, Basis.THEORETICAL, "fp16")
