import json

import pytest
from fastapi.testclient import TestClient

from rooflinebench.catalog import bundled_llama_bench, get_profile
from rooflinebench.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_catalog_endpoints(client):
    hardware = client.get("/catalog/hardware").json()
    assert "Apple M1 Pro" in hardware
    assert hardware["Apple M1 Pro"]["bandwidth_gbps"]["theoretical"] == 204.8
    architectures = client.get("/catalog/architectures").json()
    assert "Qwen2.5-1.5B" in architectures
    runs = client.get("/catalog/runs")
    assert runs.status_code == 200
    assert isinstance(json.loads(runs.text), list)


def test_ridge_by_catalog_name(client):
    response = client.post("/ridge", json={
        "profile_name": "NVIDIA RTX 3090", "precision": "fp32",
        "basis": "theoretical"})
    assert response.status_code == 200
    assert response.json()["oi_r"] == pytest.approx(38.00, abs=0.01)


def test_ridge_with_inline_profile(client):
    payload = get_profile("Apple M1 Pro").to_dict()
    response = client.post("/ridge", json={
        "profile": payload, "precision": "fp32", "basis": "theoretical"})
    assert response.json()["oi_r"] == pytest.approx(25.39, abs=0.01)


def test_missing_capability_is_a_400(client):
    response = client.post("/ridge", json={
        "profile_name": "Apple M1 Pro", "precision": "fp16", "basis": "theoretical"})
    assert response.status_code == 400
    assert "not profiled" in response.json()["detail"]


def test_schema_violation_names_key(client):
    payload = get_profile("Apple M1 Pro").to_dict()
    payload["peak_gflops"] = {"fp32": {"typo": 3.0}}
    response = client.post("/ridge", json={
        "profile": payload, "precision": "fp32", "basis": "theoretical"})
    assert response.status_code == 422  # pydantic catches the extra key
    assert "typo" in response.text


def test_both_profile_sources_rejected(client):
    payload = get_profile("Apple M1 Pro").to_dict()
    response = client.post("/ridge", json={
        "profile": payload, "profile_name": "Apple M1 Pro",
        "precision": "fp32", "basis": "theoretical"})
    assert response.status_code == 422


def test_predict_endpoint(client):
    response = client.post("/predict", json={
        "profile_name": "Apple M1 Pro", "n_params": 1.5e9,
        "precision": "fp16", "basis": "theoretical"})
    body = response.json()
    assert body["t_mem_s"] * 1e3 == pytest.approx(14.65, abs=0.01)
    assert body["bound_tps"] == pytest.approx(68.27, abs=0.1)
    assert body["regime"] == "memory-bound"


def test_attainable_endpoint(client):
    response = client.post("/attainable", json={
        "profile_name": "Apple M1 Pro", "precision": "fp16",
        "basis": "measured", "oi": 1.0})
    assert response.json()["gflops"] == pytest.approx(120.03)
    assert response.json()["regime"] == "memory-bound"


def test_phi_endpoint_with_inline_ridge(client):
    response = client.post("/phi", json={
        "point": {"oi": 10.0, "perf_gflops": 1000.0, "label": "x"},
        "ridge": {"oi_r": 25.39, "pi": 4310.0, "basis": "measured",
                  "precision": "fp32"},
        "space": "raw"})
    assert response.json()["value"] == pytest.approx(3310.036, abs=1e-3)
    assert response.json()["regime"] == "memory-bound"


def test_cost_endpoint(client):
    response = client.post("/cost", json={
        "arch_name": "Qwen2.5-1.5B", "n_ctx": 1, "weight_precision": "fp16",
        "convention": "fma", "include_kv": False, "include_lm_head": False,
        "cost_mode": "approx"})
    assert response.json()["oi"] == 1.0


def test_analyze_endpoint_produces_artifacts(client):
    response = client.post("/analyze", json={
        "arch_name": "Qwen2.5-1.5B", "profile_name": "Apple M1 Pro",
        "runs": bundled_llama_bench(), "basis": "measured",
        "config": {"cost_mode": "approx"}})
    body = response.json()
    assert len(body["points"]) == 24
    assert body["points_csv"].startswith("label,")
    assert body["phi_csv"].startswith("label,")
    assert body["svg"].startswith("<svg")
    assert json.loads(body["gaps_json"])["device"] == "Apple M1 Pro"
    decode = next(p for p in body["points"]
                  if p["label"].endswith("SISO/decode") and "F16" in p["label"])
    assert decode["perf_gflops"] == pytest.approx(154.37, abs=0.2)
    assert decode["regime"] == "memory-bound"


def test_analyze_accepts_parsed_array(client):
    rows = json.loads(bundled_llama_bench())[:2]
    response = client.post("/analyze", json={
        "arch_name": "Qwen2.5-1.5B", "profile_name": "Apple M1 Pro",
        "runs": rows, "basis": "measured"})
    assert response.status_code == 200
    assert len(response.json()["records"]) == 1


def test_sweep_endpoint(client):
    response = client.post("/sweep", json={
        "arch_name": "Qwen2.5-1.5B", "profile_name": "Apple M1 Pro",
        "axis": "precision", "values": ["fp16", "q8_0", "q4_k_m"],
        "basis": "measured", "ceiling_precision": "fp32"})
    body = response.json()
    ois = [p["oi"] for p in body["points"]]
    assert ois == sorted(ois)
    assert body["svg"].startswith("<svg")


def test_plot_endpoint_deterministic(client):
    chart = {
        "ceilings": [{"label": "c", "bandwidth_gbps": 120.0,
                      "peak_gflops": 4310.0, "basis": "measured"}],
        "points": [{"oi": 1.0, "perf_gflops": 100.0, "label": "p"}],
        "title": "determinism",
    }
    first = client.post("/plot", json={"chart": chart}).json()["svg"]
    second = client.post("/plot", json={"chart": chart}).json()["svg"]
    assert first == second


def test_gaps_endpoint(client):
    response = client.post("/gaps", json={"profile_name": "Apple M1 Pro"})
    assert response.json()["bandwidth_gap_gbps"] == pytest.approx(84.77)


def test_compare_endpoint_surfaces_incomparability(client):
    runs = bundled_llama_bench()
    response = client.post("/compare", json={
        "runs_a": runs, "runs_b": runs, "profile_name": "Apple M1 Pro",
        "basis": "measured"})
    body = response.json()
    assert body["entries"]
    assert all(e["regime"] == "memory-bound" for e in body["entries"])
    assert all(p["comparable"] for p in body["pairs"])
    # force a split-regime comparison via a profile with a tiny ridge
    tiny_ridge_profile = {
        "name": "tiny-ridge", "architecture_class": "GeneralCPU",
        "bandwidth_gbps": {"theoretical": 1000.0, "measured": 1000.0},
        "peak_gflops": {"fp32": {"theoretical": 1000.0, "measured": 1000.0}},
        "source": "", "timestamp": ""}
    response = client.post("/compare", json={
        "runs_a": runs, "runs_b": runs, "profile": tiny_ridge_profile,
        "basis": "measured"})
    body = response.json()
    regimes = {e["regime"] for e in body["entries"]}
    if len(regimes) == 2:
        assert any(not p["comparable"] for p in body["pairs"])
        assert any("incomparable" in p["reason"] for p in body["pairs"])


def test_unknown_catalog_name_is_a_400(client):
    response = client.post("/ridge", json={
        "profile_name": "Cray-1", "precision": "fp32", "basis": "theoretical"})
    assert response.status_code == 400
    assert "Cray-1" in response.json()["detail"]


def test_probe_endpoint_round_trips_through_loader(client):
    from rooflinebench.roofline import HardwareProfile

    response = client.post("/probe", json={
        "bandwidth": True, "flops": True, "name": "service-host",
        "buffer_mib": [64], "repetitions": 1, "warmup": 1})
    assert response.status_code == 200
    body = response.json()
    assert body["bandwidth_gbps"] > 0
    assert body["flops_gflops"]["fp32"] > 0
    profile = HardwareProfile.from_json(body["profile_json"])
    assert profile.name == "service-host"
    assert profile.to_json() == body["profile_json"]


def test_probe_endpoint_rejects_cache_sized_buffers(client):
    response = client.post("/probe", json={"buffer_mib": [1]})
    assert response.status_code == 400
    assert "cache" in response.json()["detail"]
