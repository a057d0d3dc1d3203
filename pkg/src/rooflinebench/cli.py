"""Command-line client for the analysis service.

Subcommands build typed requests and send them over HTTP. Without
``--server`` the service app runs in-process behind an ASGI transport, so
the same request/response path is exercised with no daemon required.
Diagnostics go to stderr; data goes to files or stdout.

Exit codes: 0 success, 1 user error (bad input, config, or request),
2 internal failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
import traceback
from pathlib import Path
from typing import Any

import httpx

from .config import load_config
from .errors import ConfigError, RooflineError

PROG = "rooflinebench"


class _UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the CLI contract says 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _call(server: str | None, method: str, path: str,
          payload: dict[str, Any] | None = None,
          timeout: float | None = 120.0) -> Any:
    """One request against a remote server or the in-process app."""
    if server:
        try:
            with httpx.Client(base_url=server, timeout=timeout) as client:
                response = client.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            raise _UserError(f"cannot reach server {server!r}: {exc}") from exc
    else:
        from .service.app import create_app

        transport = httpx.ASGITransport(app=create_app())

        async def _go():
            async with httpx.AsyncClient(transport=transport, timeout=timeout,
                                         base_url="http://rooflinebench.local") as client:
                return await client.request(method, path, json=payload)

        response = asyncio.run(_go())
    if response.status_code >= 500:
        raise RuntimeError(f"service error on {path}: {response.text}")
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        if not isinstance(detail, str):
            detail = json.dumps(detail, indent=2)
        raise _UserError(f"{path}: {detail}")
    if response.headers.get("content-type", "").startswith("application/json"):
        return response.json()
    return response.text


def _read_file(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _UserError(f"cannot read {what} file {path!r}: {exc}") from exc


def _source_payload(value: str, kind: str) -> dict[str, Any]:
    """File path -> inline JSON payload; anything else -> catalog name."""
    if os.path.exists(value):
        try:
            return {kind: json.loads(_read_file(value, kind))}
        except json.JSONDecodeError as exc:
            raise _UserError(f"{kind} file {value!r} is not valid JSON: {exc}") from exc
    return {f"{kind}_name": value}


def _config_payload(args) -> dict[str, Any]:
    config = load_config(
        getattr(args, "config", None),
        convention=getattr(args, "convention", None),
        phi_space=getattr(args, "phi_space", None),
        scenario_boundary=getattr(args, "scenario_boundary", None),
        cost_mode=getattr(args, "cost_mode", None),
        kv_write_traffic=_tristate(getattr(args, "kv_write", None)),
        include_lm_head=_tristate(getattr(args, "lm_head", None)),
    )
    return config.to_dict()


def _tristate(value: str | None) -> bool | None:
    if value is None:
        return None
    return value == "on"


def _write(directory: Path, filename: str, text: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / filename).write_text(text, encoding="utf-8")
    print(f"wrote {directory / filename}", file=sys.stderr)


def _parse_values(axis: str, raw: str) -> list[Any]:
    if axis in ("layers", "context_length"):
        if ".." in raw:
            span, _, step = raw.partition(":")
            lo, _, hi = span.partition("..")
            try:
                return list(range(int(lo), int(hi) + 1, int(step) if step else 1))
            except ValueError:
                raise _UserError(f"bad range {raw!r}; expected e.g. 2..64 or 2..64:2") from None
        try:
            return [int(v) for v in raw.split(",") if v]
        except ValueError:
            raise _UserError(f"bad {axis} values {raw!r}") from None
    return [v.strip() for v in raw.split(",") if v.strip()]


# -- subcommand handlers --------------------------------------------------


def _cmd_probe(args) -> int:
    payload: dict[str, Any] = {
        "bandwidth": args.bandwidth or not args.flops,
        "flops": args.flops or not args.bandwidth,
        "name": args.name,
        "repetitions": args.repetitions,
        "warmup": args.warmup,
        "flops_precision": args.flops_precision.split(","),
    }
    if args.threads is not None:
        payload["threads"] = args.threads
    if args.buffer_mib:
        payload["buffer_mib"] = [int(v) for v in args.buffer_mib.split(",")]
    if args.declare:
        payload["declared"] = json.loads(_read_file(args.declare, "declared profile"))
    result = _call(args.server, "POST", "/probe", payload, timeout=None)
    for note in result["notes"]:
        print(note, file=sys.stderr)
    if args.out:
        Path(args.out).write_text(result["profile_json"], encoding="utf-8")
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(result["profile_json"])
    return 0


def _cmd_predict(args) -> int:
    payload = {
        "n_params": args.params,
        "precision": args.precision,
        "basis": args.basis,
        **_source_payload(args.profile, "profile"),
    }
    if args.bytes_per_weight is not None:
        payload["bytes_per_weight"] = args.bytes_per_weight
    if args.compute_precision:
        payload["compute_precision"] = args.compute_precision
    result = _call(args.server, "POST", "/predict", payload)
    print(f"peak = {result['peak_gflops']:g} GFLOPS "
          f"({result['peak_precision']}, {args.basis})")
    print(f"t_comp = {result['t_comp_s'] * 1e3:.2f} ms")
    print(f"t_mem = {result['t_mem_s'] * 1e3:.2f} ms")
    print(f"bound = {result['bound_tps']:.1f} tok/s")
    print(f"regime = {result['regime']}")
    print(f"implied OI = {result['implied_oi']:.4g} FLOPs/Byte")
    return 0


def _cmd_analyze(args) -> int:
    payload: dict[str, Any] = {
        "runs": _read_file(args.runs, "runs"),
        "basis": args.basis,
        "config": _config_payload(args),
        **_source_payload(args.arch, "arch"),
        **_source_payload(args.profile, "profile"),
    }
    if args.ceiling_precision:
        payload["ceiling_precision"] = args.ceiling_precision
    if args.mem:
        payload["mem_trace"] = _read_file(args.mem, "memory trace")
    if args.title:
        payload["title"] = args.title
    result = _call(args.server, "POST", "/analyze", payload)
    out = Path(args.out)
    _write(out, "points.csv", result["points_csv"])
    _write(out, "phi.csv", result["phi_csv"])
    _write(out, "gaps.json", result["gaps_json"])
    _write(out, "roofline.svg", result["svg"])
    ridge = result["ridge"]
    print(f"{len(result['records'])} records -> {len(result['points'])} points; "
          f"ridge {ridge['precision']} {ridge['basis']} at {ridge['oi_r']:.2f} FLOPs/Byte",
          file=sys.stderr)
    for message in result["parse_errors"] + result["join_errors"]:
        print(f"note: {message}", file=sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    options: dict[str, Any] = {}
    if args.context_tokens is not None:
        options["context_tokens"] = args.context_tokens
    if args.weight_precision:
        options["weight_precision"] = args.weight_precision
    if args.no_kv:
        options["include_kv"] = False
    if args.embed_params is not None:
        options["embed_params"] = args.embed_params
    if args.lm_head is not None:
        options["include_lm_head"] = args.lm_head == "on"
    if args.kv_write is not None:
        options["include_kv_write"] = args.kv_write == "on"
    payload: dict[str, Any] = {
        "axis": args.axis,
        "values": _parse_values(args.axis, args.values),
        "basis": args.basis,
        "ceiling_precision": args.ceiling_precision,
        "cost_mode": args.cost_mode or "detailed",
        "convention": args.convention or "fma",
        **_source_payload(args.arch, "arch"),
        **_source_payload(args.profile, "profile"),
    }
    if options:
        payload["options"] = options
    result = _call(args.server, "POST", "/sweep", payload)
    out = Path(args.out)
    _write(out, "points.csv", result["csv"])
    if result.get("svg"):
        _write(out, "roofline.svg", result["svg"])
    print(f"{len(result['points'])} predicted points along {args.axis}", file=sys.stderr)
    return 0


def _cmd_plot(args) -> int:
    chart = json.loads(_read_file(args.chart, "chart spec"))
    result = _call(args.server, "POST", "/plot", {"chart": chart})
    Path(args.out).write_text(result["svg"], encoding="utf-8")
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_compare(args) -> int:
    payload: dict[str, Any] = {
        "runs_a": _read_file(args.runs[0], "runs"),
        "runs_b": _read_file(args.runs[1], "runs"),
        "basis": args.basis,
        "config": _config_payload(args),
        **_source_payload(args.profile, "profile"),
    }
    if args.arch_a:
        payload["arch_a"] = args.arch_a
    if args.arch_b:
        payload["arch_b"] = args.arch_b
    if args.ceiling_precision:
        payload["ceiling_precision"] = args.ceiling_precision
    result = _call(args.server, "POST", "/compare", payload)
    if args.json:
        json.dump(result, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    ridge = result["ridge"]
    print(f"ridge: {ridge['precision']} {ridge['basis']} at {ridge['oi_r']:.2f} "
          f"FLOPs/Byte, peak {ridge['pi']:g} GFLOPS")
    for entry in result["entries"]:
        print(f"  {entry['label']}: oi={entry['oi']:.3f} perf={entry['perf_gflops']:.1f} "
              f"GFLOPS regime={entry['regime']} phi={entry['phi_raw']:.1f}")
    for pair in result["pairs"]:
        if pair["comparable"]:
            print(f"  {pair['a']} vs {pair['b']}: delta phi = {pair['phi_delta_raw']:+.1f}")
        else:
            print(f"  {pair['a']} vs {pair['b']}: {pair['reason']}")
    for message in result["errors"]:
        print(f"note: {message}", file=sys.stderr)
    return 0


def _cmd_catalog(args) -> int:
    hardware = _call(args.server, "GET", "/catalog/hardware")
    architectures = _call(args.server, "GET", "/catalog/architectures")
    print("hardware profiles:")
    for name in sorted(hardware):
        print(f"  {name}")
    print("architectures:")
    for name in sorted(architectures):
        print(f"  {name}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--server", metavar="URL",
                        help="remote service URL (default: run in-process)")
    parser.add_argument("--config", metavar="FILE", help="tool config JSON")
    parser.add_argument("--convention", choices=["mac", "fma"])
    parser.add_argument("--phi-space", choices=["raw", "log10"], dest="phi_space")
    parser.add_argument("--scenario-boundary", type=int, dest="scenario_boundary")
    parser.add_argument("--cost-mode", choices=["detailed", "approx"], dest="cost_mode")
    parser.add_argument("--kv-write", choices=["on", "off"], dest="kv_write")
    parser.add_argument("--lm-head", choices=["on", "off"], dest="lm_head")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("probe", help="measure host bandwidth/compute peaks")
    p.add_argument("--bandwidth", action="store_true")
    p.add_argument("--flops", action="store_true")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--declare", metavar="FILE", help="profile JSON with theoretical values")
    p.add_argument("--name", default="host")
    p.add_argument("--buffer-mib", dest="buffer_mib", metavar="MIB[,MIB..]")
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--flops-precision", dest="flops_precision", default="fp32")
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("predict", help="analytical decode bound from parameter count")
    p.add_argument("--params", type=float, required=True)
    p.add_argument("--precision", default="fp16")
    p.add_argument("--bytes-per-weight", type=float, dest="bytes_per_weight")
    p.add_argument("--profile", required=True, help="profile file or catalog name")
    p.add_argument("--basis", choices=["theoretical", "measured"], default="theoretical")
    p.add_argument("--compute-precision", dest="compute_precision")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("analyze", help="join measured runs with the cost model")
    p.add_argument("--arch", required=True, help="architecture file or catalog name")
    p.add_argument("--profile", required=True)
    p.add_argument("--runs", required=True, help="llama-bench JSON log")
    p.add_argument("--mem", help="memory trace CSV")
    p.add_argument("--out", default="report")
    p.add_argument("--basis", choices=["theoretical", "measured"], default="measured")
    p.add_argument("--ceiling-precision", dest="ceiling_precision")
    p.add_argument("--title")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("sweep", help="predicted points along one axis")
    p.add_argument("--axis", required=True,
                   choices=["layers", "precision", "scenario", "context_length"])
    p.add_argument("--values", required=True,
                   help="e.g. 2..64, 2..64:2, fp16,q8_0,q4_k_m, SISO,LISO")
    p.add_argument("--arch", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--basis", choices=["theoretical", "measured"], default="theoretical")
    p.add_argument("--ceiling-precision", dest="ceiling_precision", default="fp32")
    p.add_argument("--context-tokens", type=float, dest="context_tokens")
    p.add_argument("--weight-precision", dest="weight_precision")
    p.add_argument("--no-kv", action="store_true", dest="no_kv",
                   help="weights-only traffic accounting")
    p.add_argument("--embed-params", type=int, dest="embed_params")
    p.add_argument("--out", default="report")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plot", help="render a chart spec to SVG")
    p.add_argument("--chart", required=True, metavar="FILE")
    p.add_argument("--out", default="roofline.svg")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("compare", help="headroom comparison of two run logs")
    p.add_argument("--runs", nargs=2, required=True, metavar=("A", "B"))
    p.add_argument("--profile", required=True)
    p.add_argument("--arch-a", dest="arch_a")
    p.add_argument("--arch-b", dest="arch_b")
    p.add_argument("--basis", choices=["theoretical", "measured"], default="measured")
    p.add_argument("--ceiling-precision", dest="ceiling_precision")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("catalog", help="list bundled profiles and architectures")
    p.set_defaults(func=_cmd_catalog)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (_UserError, ConfigError, RooflineError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"{PROG}: error: invalid JSON input: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
