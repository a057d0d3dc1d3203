"""HTTP service exposing the analysis toolkit.

Every endpoint is a thin wrapper: requests resolve to domain objects, the
core package does the work, responses carry results plus any rendered
artifacts (CSV/SVG/JSON text) so clients only do I/O.
"""

from __future__ import annotations

import json
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .. import __version__, catalog, hwprobe
from ..arch import ArchConfig, Convention, CostMode, Precision, decode_step_cost
from ..config import ToolConfig
from ..errors import ConfigError, RooflineError
from ..ingest import parse_llama_bench
from ..report import (Ceiling, ChartSpec, SweepAxis, SweepOptions, SweepSpec,
                      analyze_runs, choose_ceiling_precision, export_csv,
                      gap_analysis, render_chart, run_sweep)
from ..roofline import (Basis, HardwareProfile, PhiSpace, Provenance, Regime,
                        RidgePoint, RooflinePoint, attainable, classify, phi,
                        predict_decode, ridge)
from . import schemas as S


def _profile_from(req) -> HardwareProfile:
    if req.profile_name is not None:
        return catalog.get_profile(req.profile_name)
    return HardwareProfile.from_dict(req.profile.payload())


def _arch_from(req) -> ArchConfig:
    if req.arch_name is not None:
        return catalog.get_arch(req.arch_name)
    return ArchConfig.from_dict(req.arch.payload())


def _runs_text(payload: Any) -> str:
    return payload if isinstance(payload, str) else json.dumps(payload)


def _config_from(model: S.ConfigModel | None) -> ToolConfig:
    if model is None:
        return ToolConfig()
    return ToolConfig().with_overrides(**model.overrides())


def _point_model(point: RooflinePoint) -> S.PointModel:
    return S.PointModel(
        oi=point.oi, perf_gflops=point.perf_gflops, label=point.label,
        provenance=point.provenance.value,
        regime=point.regime.value if point.regime else None,
        scenario=point.scenario)


def _ridge_model(r: RidgePoint) -> S.RidgeResponse:
    return S.RidgeResponse(oi_r=r.oi_r, pi=r.pi, basis=r.basis.value, precision=r.precision)


def _domain_point(model: S.PointModel) -> RooflinePoint:
    return RooflinePoint(
        oi=model.oi, perf_gflops=model.perf_gflops, label=model.label,
        provenance=Provenance(model.provenance),
        regime=Regime(model.regime) if model.regime else None,
        scenario=model.scenario)


def _domain_ridge(model: S.RidgeModel) -> RidgePoint:
    return RidgePoint(oi_r=model.oi_r, pi=model.pi, basis=Basis(model.basis),
                      precision=model.precision)


def create_app() -> FastAPI:
    app = FastAPI(title="rooflinebench", version=__version__)

    @app.exception_handler(RooflineError)
    async def _domain_error(request: Request, exc: RooflineError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=S.HealthResponse)
    def health() -> S.HealthResponse:
        return S.HealthResponse(status="ok", version=__version__)

    @app.get("/catalog/hardware")
    def catalog_hardware() -> dict[str, Any]:
        return {name: p.to_dict() for name, p in catalog.hardware_catalog().items()}

    @app.get("/catalog/architectures")
    def catalog_architectures() -> dict[str, Any]:
        return {name: a.to_dict() for name, a in catalog.architecture_catalog().items()}

    @app.get("/catalog/runs", response_class=PlainTextResponse)
    def catalog_runs() -> str:
        return catalog.bundled_llama_bench()

    @app.post("/ridge", response_model=S.RidgeResponse)
    def ridge_endpoint(req: S.RidgeRequest) -> S.RidgeResponse:
        return _ridge_model(ridge(_profile_from(req), req.precision, Basis(req.basis)))

    @app.post("/attainable", response_model=S.AttainableResponse)
    def attainable_endpoint(req: S.AttainableRequest) -> S.AttainableResponse:
        profile = _profile_from(req)
        basis = Basis(req.basis)
        gflops = attainable(profile, req.oi, req.precision, basis)
        regime = classify(req.oi, ridge(profile, req.precision, basis))
        return S.AttainableResponse(gflops=gflops, regime=regime.value)

    @app.post("/predict", response_model=S.PredictResponse)
    def predict_endpoint(req: S.PredictRequest) -> S.PredictResponse:
        precision = Precision.of(req.precision, req.bytes_per_weight)
        timing = predict_decode(int(req.n_params), precision, _profile_from(req),
                                Basis(req.basis), req.compute_precision)
        return S.PredictResponse(
            t_comp_s=timing.t_comp_s, t_mem_s=timing.t_mem_s,
            bound_tps=timing.bound_tps, regime=timing.regime.value,
            implied_oi=timing.implied_oi, peak_gflops=timing.peak_gflops,
            peak_precision=timing.peak_precision)

    @app.post("/phi", response_model=S.PhiResponse)
    def phi_endpoint(req: S.PhiRequest) -> S.PhiResponse:
        if req.ridge is not None:
            ridge_point = _domain_ridge(req.ridge)
        else:
            ridge_point = ridge(_profile_from(req), req.precision, Basis(req.basis))
        result = phi(_domain_point(req.point), ridge_point, PhiSpace(req.space))
        return S.PhiResponse(
            value=result.value, space=result.space.value, regime=result.regime.value,
            raw=result.raw, log10=result.log10, above_ceiling=result.above_ceiling)

    @app.post("/cost", response_model=S.CostResponse)
    def cost_endpoint(req: S.CostRequest) -> S.CostResponse:
        cost = decode_step_cost(
            _arch_from(req), req.n_ctx,
            Precision.of(req.weight_precision, req.bytes_per_weight),
            Precision.of(req.kv_precision),
            Convention.FMA if req.convention == "fma" else Convention.MAC,
            req.include_lm_head,
            include_kv=req.include_kv,
            include_kv_write=req.include_kv_write,
            cost_mode=CostMode(req.cost_mode))
        return S.CostResponse(**cost.to_dict(), oi=cost.oi)

    @app.post("/analyze", response_model=S.AnalyzeResponse)
    def analyze_endpoint(req: S.AnalyzeRequest) -> S.AnalyzeResponse:
        config = _config_from(req.config)
        bundle = analyze_runs(
            _arch_from(req), _profile_from(req), _runs_text(req.runs),
            basis=Basis(req.basis),
            ceiling_precision=req.ceiling_precision,
            convention=config.convention_enum,
            join_options=config.join_options(),
            phi_space=config.phi_space_enum,
            mem_trace=req.mem_trace,
            title=req.title)
        return S.AnalyzeResponse(
            records=[S.RunRecordModel(**r.to_dict()) for r in bundle.records],
            parse_errors=[f"row {e.row}: {e.message}" for e in bundle.parse_errors],
            join_errors=bundle.join_errors,
            points=[_point_model(p) for p in bundle.points],
            ridge=_ridge_model(bundle.ridge),
            gaps=bundle.gaps.to_dict(),
            points_csv=bundle.points_csv,
            phi_csv=bundle.phi_csv,
            gaps_json=bundle.gaps_json,
            svg=bundle.svg)

    @app.post("/sweep", response_model=S.SweepResponse)
    def sweep_endpoint(req: S.SweepRequest) -> S.SweepResponse:
        options = SweepOptions()
        if req.options is not None:
            raw = {k: v for k, v in req.options.model_dump().items() if v is not None}
            for key in ("weight_precision", "kv_precision"):
                if key in raw:
                    raw[key] = Precision.of(raw[key])
            options = SweepOptions(**raw, convention=(
                Convention.FMA if req.convention == "fma" else Convention.MAC))
        elif req.convention == "mac":
            options = SweepOptions(convention=Convention.MAC)
        profile = _profile_from(req)
        basis = Basis(req.basis)
        spec = SweepSpec(
            axis=SweepAxis(req.axis), values=tuple(req.values),
            arch=_arch_from(req), profile=profile, basis=basis,
            cost_mode=CostMode(req.cost_mode),
            ceiling_precision=req.ceiling_precision, options=options)
        points = run_sweep(spec)
        ridge_point = ridge(profile, req.ceiling_precision, basis)
        svg = None
        if req.render:
            ceiling = Ceiling(
                label=f"{profile.name} {req.ceiling_precision} {basis.value}",
                bandwidth_gbps=profile.bandwidth_for(basis),
                peak_gflops=profile.peak_for(req.ceiling_precision, basis),
                basis=basis)
            svg = render_chart(ChartSpec(
                ceilings=(ceiling,), points=tuple(points),
                ridge_markers=(ridge_point,),
                title=f"{spec.arch.name} {req.axis} sweep"))
        return S.SweepResponse(
            points=[_point_model(p) for p in points],
            ridge=_ridge_model(ridge_point),
            csv=export_csv(points, [phi(p, ridge_point) for p in points]),
            svg=svg)

    @app.post("/plot", response_model=S.PlotResponse)
    def plot_endpoint(req: S.PlotRequest) -> S.PlotResponse:
        chart = req.chart
        spec = ChartSpec(
            ceilings=tuple(Ceiling(label=c.label, bandwidth_gbps=c.bandwidth_gbps,
                                   peak_gflops=c.peak_gflops, basis=Basis(c.basis))
                           for c in chart.ceilings),
            points=tuple(_domain_point(p) for p in chart.points),
            ridge_markers=tuple(_domain_ridge(r) for r in chart.ridge_markers),
            phi_annotations=chart.phi_annotations,
            phi_ridge=_domain_ridge(chart.phi_ridge) if chart.phi_ridge else None,
            title=chart.title)
        return S.PlotResponse(svg=render_chart(spec))

    @app.post("/compare", response_model=S.CompareResponse)
    def compare_endpoint(req: S.CompareRequest) -> S.CompareResponse:
        config = _config_from(req.config)
        profile = _profile_from(req)
        basis = Basis(req.basis)
        precision = choose_ceiling_precision(profile, basis, req.ceiling_precision)
        ridge_point = ridge(profile, precision, basis)
        entries: list[S.CompareEntry] = []
        errors: list[str] = []
        for source, document, arch_name in (("a", req.runs_a, req.arch_a),
                                            ("b", req.runs_b, req.arch_b)):
            outcome = parse_llama_bench(_runs_text(document))
            errors.extend(f"runs_{source} row {e.row}: {e.message}" for e in outcome.errors)
            for record in outcome.records:
                try:
                    arch = (catalog.get_arch(arch_name) if arch_name
                            else catalog.resolve_arch_for_record(record))
                    from ..ingest import join

                    joined = join(record, arch, config.convention_enum,
                                  config.join_options())
                except RooflineError as exc:
                    errors.append(f"runs_{source}: {exc}")
                    continue
                if joined.decode is None:
                    continue
                point = joined.decode.classified(ridge_point)
                result = phi(point, ridge_point, config.phi_space_enum)
                entries.append(S.CompareEntry(
                    label=f"{source}:{point.label}", source=source,
                    oi=point.oi, perf_gflops=point.perf_gflops,
                    regime=result.regime.value,
                    phi_raw=result.raw, phi_log10=result.log10))
        pairs: list[S.ComparePair] = []
        for ea in (e for e in entries if e.source == "a"):
            for eb in (e for e in entries if e.source == "b"):
                comparable = ea.regime == eb.regime
                pairs.append(S.ComparePair(
                    a=ea.label, b=eb.label, comparable=comparable,
                    reason="same regime" if comparable else
                    f"incomparable: {ea.regime} vs {eb.regime}",
                    phi_delta_raw=(ea.phi_raw - eb.phi_raw) if comparable else None))
        return S.CompareResponse(ridge=_ridge_model(ridge_point), entries=entries,
                                 pairs=pairs, errors=errors)

    @app.post("/probe", response_model=S.ProbeResponse)
    def probe_endpoint(req: S.ProbeRequest) -> S.ProbeResponse:
        if not req.bandwidth and not req.flops:
            raise ConfigError("probe needs at least one of bandwidth/flops")
        kwargs: dict[str, Any] = dict(repetitions=req.repetitions, warmup=req.warmup,
                                      flops_precision=tuple(req.flops_precision))
        if req.threads is not None:
            kwargs["threads"] = req.threads
        if req.buffer_mib is not None:
            kwargs["buffer_bytes"] = tuple(m * hwprobe.MIB for m in req.buffer_mib)
        probe_config = hwprobe.ProbeConfig(**kwargs)
        result = hwprobe.ProbeResult()
        if req.bandwidth:
            result = result.merged_with(hwprobe.measure_bandwidth(probe_config))
        if req.flops:
            result = result.merged_with(hwprobe.measure_flops(probe_config))
        declared = (HardwareProfile.from_dict(req.declared.payload())
                    if req.declared is not None else None)
        result.notes.extend(hwprobe.sanity_notes(result, declared))
        profile = hwprobe.emit_profile(result, name=req.name, declared=declared)
        return S.ProbeResponse(
            profile=profile.to_dict(), profile_json=profile.to_json(),
            bandwidth_gbps=result.bandwidth_gbps, flops_gflops=result.flops_gflops,
            notes=result.notes, environment=result.environment)

    @app.post("/gaps")
    def gaps_endpoint(req: S.GapsRequest) -> dict[str, Any]:
        return gap_analysis(_profile_from(req)).to_dict()

    return app


app = create_app()
