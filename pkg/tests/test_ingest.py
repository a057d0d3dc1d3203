import json

import pytest
from hypothesis import given, settings, strategies as st

from rooflinebench.arch import Convention, CostMode
from rooflinebench.catalog import bundled_llama_bench, get_arch
from rooflinebench.errors import IngestError, JoinError
from rooflinebench.ingest import (ContextPolicy, JoinOptions, MemorySummary, RunRecord,
                                  Scenario, Thresholds, classify_scenario, join,
                                  parse_llama_bench, parse_memory_trace,
                                  representative_context, weight_precision_for)
from rooflinebench.roofline import Basis, Regime, classify, ridge
from rooflinebench.catalog import get_profile


def _row(**overrides):
    row = {
        "model_type": "qwen2 1.5B F16",
        "model_n_params": 1543714304,
        "n_prompt": 64,
        "n_gen": 64,
        "test": "tg64",
        "avg_ts": 50.0,
        "stddev_ts": 0.5,
        "backends": "Metal",
        "gpu_info": "Apple M1 Pro GPU",
        "test_time": "2026-01-10T12:00:00Z",
    }
    row.update(overrides)
    return row


# -- parsing -----------------------------------------------------------------

def test_parse_bundled_fixture():
    outcome = parse_llama_bench(bundled_llama_bench())
    assert len(outcome.records) == 16
    assert not outcome.errors
    siso = next(r for r in outcome.records
                if r.quant_label == "F16" and (r.n_prompt, r.n_gen) == (64, 64)
                and "qwen2" in r.model_name)
    assert siso.prefill_tps == 1424.0
    assert siso.decode_tps == 50.0
    assert siso.backend == "Metal"


def test_parse_generation_row_example():
    outcome = parse_llama_bench(json.dumps([_row()]))
    assert len(outcome.records) == 1
    assert outcome.records[0].decode_tps == 50.0
    assert outcome.records[0].prefill_tps is None
    assert outcome.records[0].quant_label == "F16"


def test_parse_empty_array():
    outcome = parse_llama_bench("[]")
    assert outcome.records == []
    assert outcome.errors == []


def test_parse_collects_row_errors_and_keeps_valid_rows():
    doc = json.dumps([_row(), {k: v for k, v in _row().items() if k != "avg_ts"}])
    outcome = parse_llama_bench(doc)
    assert len(outcome.records) == 1
    assert len(outcome.errors) == 1
    assert "avg_ts" in outcome.errors[0].message


def test_parse_merges_pp_and_tg_rows():
    doc = json.dumps([
        _row(test="pp64", avg_ts=1424.0),
        _row(test="tg64", avg_ts=50.0),
    ])
    outcome = parse_llama_bench(doc)
    assert len(outcome.records) == 1
    record = outcome.records[0]
    assert record.prefill_tps == 1424.0
    assert record.decode_tps == 50.0


def test_parse_infers_kind_without_test_label():
    doc = json.dumps([
        _row(test=None, n_prompt=512, n_gen=0, avg_ts=1400.0),
        _row(test=None, n_prompt=0, n_gen=128, avg_ts=48.0),
    ])
    del_doc = json.loads(doc)
    for row in del_doc:
        row.pop("test")
    outcome = parse_llama_bench(json.dumps(del_doc))
    assert len(outcome.records) == 2
    assert outcome.records[0].prefill_tps == 1400.0
    assert outcome.records[1].decode_tps == 48.0


def test_parse_rejects_non_array():
    with pytest.raises(IngestError, match="array"):
        parse_llama_bench('{"not": "an array"}')
    with pytest.raises(IngestError, match="JSON"):
        parse_llama_bench("{nope")


def test_parse_counts_account_for_merging():
    raw = json.loads(bundled_llama_bench())
    outcome = parse_llama_bench(bundled_llama_bench())
    assert len(outcome.records) + len(outcome.errors) >= len(raw) // 2


# -- scenario classification ---------------------------------------------------

def test_classify_scenario_examples():
    assert classify_scenario(64, 64) is Scenario.SISO
    assert classify_scenario(2048, 64) is Scenario.LISO
    assert classify_scenario(0, 64) is Scenario.SISO
    assert classify_scenario(64, 2048) is Scenario.SILO
    assert classify_scenario(2048, 2048) is Scenario.LILO
    assert classify_scenario(512, 512) is Scenario.SISO  # boundary inclusive short
    assert classify_scenario(513, 513) is Scenario.LILO


@settings(max_examples=200, deadline=None)
@given(n_prompt=st.integers(0, 10_000), n_gen=st.integers(0, 10_000),
       boundary=st.integers(1, 4096))
def test_classify_scenario_is_total_partition(n_prompt, n_gen, boundary):
    thresholds = Thresholds(short_max=boundary, long_min=boundary + 1)
    scenario = classify_scenario(n_prompt, n_gen, thresholds)
    assert scenario in Scenario


def test_threshold_ordering_enforced():
    with pytest.raises(IngestError):
        Thresholds(short_max=600, long_min=600)


def test_representative_context_policies():
    assert representative_context(64, 64, ContextPolicy.START) == 64
    assert representative_context(64, 64, ContextPolicy.MID) == 96
    assert representative_context(64, 64, ContextPolicy.END) == 128
    assert representative_context(64, 64, ContextPolicy.INTEGRAL) == 64 + 63 / 2
    assert representative_context(0, 1, ContextPolicy.MID) == 1.0  # floor at one token


# -- join -----------------------------------------------------------------------

def test_join_bundled_fixture_approx_mode():
    outcome = parse_llama_bench(bundled_llama_bench())
    record = next(r for r in outcome.records
                  if r.quant_label == "F16" and (r.n_prompt, r.n_gen) == (64, 64)
                  and "qwen2" in r.model_name)
    joined = join(record, get_arch("Qwen2.5-1.5B"), Convention.FMA,
                  JoinOptions(cost_mode=CostMode.APPROX))
    assert joined.scenario is Scenario.SISO
    decode = joined.decode
    assert decode is not None
    assert decode.perf_gflops == pytest.approx(154.0, rel=0.01)
    r = ridge(get_profile("Apple M1 Pro"), "fp16", Basis.MEASURED)
    assert classify(decode.oi, r) is Regime.MEMORY_BOUND


def test_join_without_decode_tps_has_no_decode_point():
    record = RunRecord(model_name="qwen2 1.5B F16", model_n_params=1543714304,
                       quant_label="F16", n_prompt=64, n_gen=0, prefill_tps=1424.0)
    joined = join(record, get_arch("Qwen2.5-1.5B"))
    assert joined.decode is None
    assert joined.prefill is not None


def test_join_params_mismatch_names_both_counts():
    record = RunRecord(model_name="other 0.5B F16", model_n_params=500_000_000,
                       quant_label="F16", n_prompt=64, n_gen=64, decode_tps=10.0)
    with pytest.raises(JoinError) as excinfo:
        join(record, get_arch("Qwen2.5-1.5B"))
    assert "500000000" in str(excinfo.value)
    assert "1543714304" in str(excinfo.value)


def test_join_unknown_quant_label_lists_known():
    record = RunRecord(model_name="qwen2 1.5B IQ2_XS", model_n_params=1543714304,
                       quant_label="IQ2_XS", n_prompt=64, n_gen=64, decode_tps=10.0)
    with pytest.raises(JoinError, match="Q4_K_M"):
        join(record, get_arch("Qwen2.5-1.5B"))
    with pytest.raises(JoinError):
        weight_precision_for("unknown")


def test_join_regime_stable_under_common_rescale():
    # OI is scale-free: scaling W and Q together must not move the point
    from rooflinebench.arch import CostBreakdown
    from rooflinebench.roofline import to_point

    cost = CostBreakdown(10.0, 20.0, 5.0, 1.0, 100.0, 10.0, 2.0)
    scaled = CostBreakdown(30.0, 60.0, 15.0, 3.0, 300.0, 30.0, 6.0)
    r = ridge(get_profile("Apple M1 Pro"), "fp32", Basis.MEASURED)
    a = to_point(cost, 1.0, "a")
    b = to_point(scaled, 3.0, "b")  # 3x work at 3x latency: same point
    assert a.oi == pytest.approx(b.oi)
    assert a.perf_gflops == pytest.approx(b.perf_gflops)
    assert classify(a.oi, r) is classify(b.oi, r)


# -- memory traces ----------------------------------------------------------------

def test_memory_trace_single_row():
    summary = parse_memory_trace("timestamp_ms,rss_bytes\n0,1000\n")
    assert summary == MemorySummary(peak_bytes=1000, steady_bytes=1000, samples=1)


def test_memory_trace_last_quartile_median():
    body = "timestamp_ms,rss_bytes\n0,1000\n1,2000\n2,3000\n3,3000\n"
    summary = parse_memory_trace(body)
    assert summary.peak_bytes == 3000
    assert summary.steady_bytes == 3000
    assert summary.samples == 4


def test_memory_trace_empty_body_errors():
    with pytest.raises(IngestError, match="no samples"):
        parse_memory_trace("timestamp_ms,rss_bytes\n")
    with pytest.raises(IngestError, match="no samples"):
        parse_memory_trace("")


def test_memory_trace_bad_rows_skipped_and_backwards_time_warns(caplog):
    body = "timestamp_ms,rss_bytes\n0,1000\n1,oops\n2,2000\n1,3000\n"
    with caplog.at_level("WARNING"):
        summary = parse_memory_trace(body)
    assert summary.samples == 3
    assert summary.peak_bytes == 3000
    assert any("backwards" in message for message in caplog.messages)


def test_memory_trace_requires_exact_header():
    with pytest.raises(IngestError, match="header"):
        parse_memory_trace("time,rss\n0,1\n")


# -- record round-trip --------------------------------------------------------------

def test_run_record_round_trip():
    outcome = parse_llama_bench(bundled_llama_bench())
    for record in outcome.records:
        clone = RunRecord.from_dict(json.loads(json.dumps(record.to_dict())))
        assert clone == record
    with_memory = RunRecord(
        model_name="m F16", model_n_params=10, quant_label="F16", n_prompt=1,
        n_gen=2, decode_tps=3.0,
        memory=MemorySummary(peak_bytes=10, steady_bytes=5, samples=2))
    assert RunRecord.from_dict(json.loads(json.dumps(with_memory.to_dict()))) == with_memory


def test_run_record_invariants():
    with pytest.raises(IngestError, match="neither"):
        RunRecord(model_name="x", model_n_params=1, quant_label="F16",
                  n_prompt=1, n_gen=1)
    with pytest.raises(IngestError, match="not both zero"):
        RunRecord(model_name="x", model_n_params=1, quant_label="F16",
                  n_prompt=0, n_gen=0, decode_tps=1.0)
