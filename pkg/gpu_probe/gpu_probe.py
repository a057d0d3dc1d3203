#!/usr/bin/env python3
"""Accelerator peak-bandwidth and matmul-throughput probe.

Measures device memory bandwidth with large elementwise adds (3 bytes moved
per element per pass) and compute peaks with square matrix multiplies
(2*m^3 FLOPs per multiply), then writes a hardware-profile JSON in the same
schema and canonical byte format the analysis service consumes.

Backends: cuda (torch, event timing), metal (torch MPS, wall clock with
explicit synchronization), cpu-fallback (numpy BLAS; must be requested
explicitly, never silently substituted).

Usage:
    gpu_probe.py --backend cuda --out profile.json --name "RTX 3090" \
                 [--declare theo.json] [--precisions fp16,fp32]

Exit codes: 0 success, 1 user error (backend unavailable, bad arguments,
another probe running), 2 internal defect (e.g. missing-synchronization
self-check tripped).
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

ELEMENT_BYTES = {"fp32": 4, "fp16": 2}
CACHE_FLOOR_ELEMS = 1 << 24  # 64 MiB of fp32, past any on-die cache
DEFAULT_TENSOR_ELEMS = (1 << 26, 1 << 28)
DEFAULT_MATMUL_SIZES = (2048, 4096, 8192)
MEMORY_FRACTION = 0.4  # leave headroom: three buffers plus framework overhead

ARCH_CLASS_FOR_BACKEND = {
    "cuda": "DiscreteGPU",
    "metal": "UnifiedSoC",
    "cpu-fallback": "GeneralCPU",
}


class ProbeUserError(Exception):
    """Bad invocation: unavailable backend, invalid config, lock held."""


class ProbeDefect(Exception):
    """Self-check failure that invalidates measurements."""


def matmul_flops(m: int) -> int:
    """FLOPs in one m x m x m multiply; static count, independent of timing."""
    return 2 * m ** 3


def add_traffic_bytes(n_elements: int, element_bytes: int) -> int:
    """Bytes moved by one elementwise add pass: two reads and one write."""
    return 3 * n_elements * element_bytes


@dataclass
class AccelProbeConfig:
    backend: str
    tensor_elems: tuple[int, ...] = DEFAULT_TENSOR_ELEMS
    matmul_sizes: tuple[int, ...] = DEFAULT_MATMUL_SIZES
    repetitions: int = 20
    warmup: int = 3
    precisions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.backend not in ARCH_CLASS_FOR_BACKEND:
            raise ProbeUserError(
                f"unknown backend {self.backend!r}; known: {sorted(ARCH_CLASS_FOR_BACKEND)}")
        if self.repetitions < 3:
            raise ProbeUserError("repetitions must be >= 3")
        for n in self.tensor_elems:
            if n < CACHE_FLOOR_ELEMS:
                raise ProbeUserError(
                    f"tensor of {n} elements would fit in cache; "
                    f"floor is {CACHE_FLOOR_ELEMS} elements")
        for m in self.matmul_sizes:
            if m < 16:
                raise ProbeUserError(f"matmul size {m} is too small to time")
        if not self.precisions:
            self.precisions = ("fp32",) if self.backend == "cpu-fallback" else ("fp16", "fp32")
        for precision in self.precisions:
            if precision not in ELEMENT_BYTES:
                raise ProbeUserError(f"unsupported precision {precision!r}")


# -- backends ---------------------------------------------------------------


class CpuFallbackBackend:
    """numpy on the host CPU; for schema validation and machines with no accelerator."""

    name = "cpu-fallback"

    def __init__(self):
        import numpy as np

        self.np = np

    def dtype(self, precision):
        return self.np.float32 if precision == "fp32" else self.np.float16

    def alloc_add(self, n, precision):
        dt = self.dtype(precision)
        return (self.np.full(n, 1.5, dtype=dt), self.np.full(n, 2.5, dtype=dt),
                self.np.zeros(n, dtype=dt))

    def add(self, a, b, out):
        self.np.add(a, b, out=out)

    def alloc_matmul(self, m, precision):
        dt = self.dtype(precision)
        rng = self.np.random.default_rng(0)
        return (rng.random((m, m)).astype(dt), rng.random((m, m)).astype(dt))

    def matmul(self, x, y):
        return x @ y

    def synchronize(self):
        pass

    def time_op(self, fn) -> float:
        t0 = time.perf_counter()
        fn()
        return time.perf_counter() - t0

    def free_bytes(self) -> int:
        try:
            import psutil

            return psutil.virtual_memory().available
        except ImportError:
            return 2 << 30

    oom_errors = (MemoryError,)


class _TorchBackend:
    def __init__(self, device: str):
        import torch

        self.torch = torch
        self.device = device

    def dtype(self, precision):
        return self.torch.float32 if precision == "fp32" else self.torch.float16

    def alloc_add(self, n, precision):
        dt = self.dtype(precision)
        a = self.torch.full((n,), 1.5, dtype=dt, device=self.device)
        b = self.torch.full((n,), 2.5, dtype=dt, device=self.device)
        out = self.torch.zeros(n, dtype=dt, device=self.device)
        return a, b, out

    def add(self, a, b, out):
        self.torch.add(a, b, out=out)

    def alloc_matmul(self, m, precision):
        dt = self.dtype(precision)
        x = self.torch.rand((m, m), dtype=self.torch.float32, device=self.device).to(dt)
        y = self.torch.rand((m, m), dtype=self.torch.float32, device=self.device).to(dt)
        return x, y

    def matmul(self, x, y):
        return x @ y

    @property
    def oom_errors(self):
        return (self.torch.cuda.OutOfMemoryError, RuntimeError, MemoryError) \
            if self.device == "cuda" else (RuntimeError, MemoryError)


class CudaBackend(_TorchBackend):
    name = "cuda"

    def __init__(self):
        super().__init__("cuda")
        if not self.torch.cuda.is_available():
            raise ProbeUserError("backend unavailable: no CUDA device visible to torch")

    def synchronize(self):
        self.torch.cuda.synchronize()

    def time_op(self, fn) -> float:
        # device-side events avoid host-launch skew
        start = self.torch.cuda.Event(enable_timing=True)
        stop = self.torch.cuda.Event(enable_timing=True)
        start.record()
        fn()
        stop.record()
        self.torch.cuda.synchronize()
        return start.elapsed_time(stop) / 1e3

    def free_bytes(self) -> int:
        free, _total = self.torch.cuda.mem_get_info()
        return free


class MetalBackend(_TorchBackend):
    name = "metal"

    def __init__(self):
        super().__init__("mps")
        if not self.torch.backends.mps.is_available():
            raise ProbeUserError("backend unavailable: no Metal (MPS) device visible to torch")

    def synchronize(self):
        self.torch.mps.synchronize()

    def time_op(self, fn) -> float:
        self.synchronize()
        t0 = time.perf_counter()
        fn()
        self.synchronize()
        return time.perf_counter() - t0

    def free_bytes(self) -> int:
        import psutil

        return psutil.virtual_memory().available  # unified memory


def make_backend(name: str):
    if name == "cuda":
        return CudaBackend()
    if name == "metal":
        return MetalBackend()
    if name == "cpu-fallback":
        return CpuFallbackBackend()
    raise ProbeUserError(f"unknown backend {name!r}")


# -- measurement --------------------------------------------------------------


def _median_best(per_size_medians: list[float]) -> float:
    return max(per_size_medians)


def _cap_sizes(sizes, bytes_per_item, free_bytes, notes, what):
    budget = int(free_bytes * MEMORY_FRACTION)
    capped = []
    for size in sizes:
        original = size
        while size > 1 and bytes_per_item(size) > budget:
            size //= 2
        if size != original:
            notes.append(f"capped {what} {original} -> {size} to fit device memory")
        if size not in capped:
            capped.append(size)
    return capped


def measure_bandwidth(backend, config: AccelProbeConfig, notes: list[str]) -> float:
    precision = "fp32"
    e = ELEMENT_BYTES[precision]
    free = backend.free_bytes()
    sizes = _cap_sizes(config.tensor_elems, lambda n: 3 * n * e, free, notes, "tensor")
    medians = []
    for n in sizes:
        while True:
            try:
                a, b, out = backend.alloc_add(n, precision)
                break
            except backend.oom_errors:
                n //= 2
                notes.append(f"halved add tensor to {n} elements after allocation failure")
                if n < 1024:
                    raise ProbeUserError("cannot allocate even tiny probe tensors") from None
        for _ in range(config.warmup):
            backend.add(a, b, out)
        backend.synchronize()
        trials = []
        for _ in range(config.repetitions):
            seconds = backend.time_op(lambda: backend.add(a, b, out))
            if seconds <= 0:
                continue
            trials.append(add_traffic_bytes(n, e) / seconds / 1e9)
        if trials:
            medians.append(statistics.median(trials))
        del a, b, out
    if not medians:
        raise ProbeDefect("no usable bandwidth trials; timer returned zero durations")
    return _median_best(medians)


def measure_matmul(backend, config: AccelProbeConfig, precision: str,
                   notes: list[str]) -> float:
    e = ELEMENT_BYTES[precision]
    free = backend.free_bytes()
    sizes = _cap_sizes(config.matmul_sizes, lambda m: 3 * m * m * e, free, notes, "matmul")
    medians = []
    for m in sizes:
        while True:
            try:
                x, y = backend.alloc_matmul(m, precision)
                break
            except backend.oom_errors:
                m //= 2
                notes.append(f"halved matmul to {m} after allocation failure")
                if m < 16:
                    raise ProbeUserError("cannot allocate even tiny matmul operands") from None
        for _ in range(config.warmup):
            backend.matmul(x, y)
        backend.synchronize()
        trials = []
        for _ in range(config.repetitions):
            seconds = backend.time_op(lambda: backend.matmul(x, y))
            if seconds <= 0:
                continue
            trials.append(matmul_flops(m) / seconds / 1e9)
        if trials:
            medians.append(statistics.median(trials))
        del x, y
    if not medians:
        raise ProbeDefect("no usable matmul trials; timer returned zero durations")
    return _median_best(medians)


# -- shared profile schema ------------------------------------------------------


def load_declared(path: str) -> dict:
    with open(path, encoding="utf-8") as handle:
        declared = json.load(handle)
    if not isinstance(declared, dict) or "bandwidth_gbps" not in declared:
        raise ProbeUserError(f"declared profile {path!r} is not a hardware profile")
    return declared


def emit_profile_json(name: str, architecture_class: str, bandwidth_theoretical: float,
                      bandwidth_measured: float | None,
                      peaks: dict[str, dict[str, float | None]],
                      source: str, timestamp: str) -> str:
    """Canonical profile text: fixed key order, two-space indent, newline end.

    Must match the analysis service's emitter byte for byte so its
    round-trip checks hold on our output.
    """
    bandwidth: dict[str, float] = {"theoretical": bandwidth_theoretical}
    if bandwidth_measured is not None:
        bandwidth["measured"] = bandwidth_measured
    peaks_out: dict[str, dict[str, float]] = {}
    for precision in sorted(peaks):
        entry: dict[str, float] = {}
        if peaks[precision].get("theoretical") is not None:
            entry["theoretical"] = peaks[precision]["theoretical"]
        if peaks[precision].get("measured") is not None:
            entry["measured"] = peaks[precision]["measured"]
        peaks_out[precision] = entry
    document = {
        "name": name,
        "architecture_class": architecture_class,
        "bandwidth_gbps": bandwidth,
        "peak_gflops": peaks_out,
        "source": source,
        "timestamp": timestamp,
    }
    return json.dumps(document, indent=2) + "\n"


# -- single-instance lock ---------------------------------------------------------


class InstanceLock:
    """One probe per device: refuse to start while another holds the lock file."""

    def __init__(self, path: Path | None = None):
        self.path = path or Path(tempfile.gettempdir()) / "gpu_probe.lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            pid = None
            try:
                pid = int(self.path.read_text().strip() or 0)
            except (OSError, ValueError):
                pass
            if pid and _pid_alive(pid):
                raise ProbeUserError(
                    f"another probe (pid {pid}) holds {self.path}; refusing to run"
                ) from None
            self.path.unlink(missing_ok=True)
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        with os.fdopen(fd, "w") as handle:
            handle.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


# -- CLI ---------------------------------------------------------------------------


def run_probe(config: AccelProbeConfig, name: str, declared: dict | None,
              timestamp: str | None = None) -> tuple[str, list[str]]:
    notes: list[str] = []
    backend = make_backend(config.backend)
    bandwidth = measure_bandwidth(backend, config, notes)
    declared_bw = (declared or {}).get("bandwidth_gbps", {}).get("theoretical")
    if declared_bw and bandwidth > 10.0 * declared_bw:
        raise ProbeDefect(
            f"measured bandwidth {bandwidth:.1f} GB/s exceeds 10x the declared "
            f"theoretical {declared_bw:.1f} GB/s; timing without device "
            "synchronization suspected, aborting")
    peaks: dict[str, dict[str, float | None]] = {}
    declared_peaks = (declared or {}).get("peak_gflops", {})
    for precision in config.precisions:
        measured = measure_matmul(backend, config, precision, notes)
        theoretical = declared_peaks.get(precision, {}).get("theoretical")
        peaks[precision] = {"theoretical": theoretical, "measured": measured}
    for precision, entry in declared_peaks.items():
        if precision not in peaks:
            peaks[precision] = {"theoretical": entry.get("theoretical"),
                                "measured": entry.get("measured")}
    arch_class = (declared or {}).get("architecture_class") \
        or ARCH_CLASS_FOR_BACKEND[config.backend]
    theo_bw = declared_bw if declared_bw else bandwidth
    source_bits = [f"gpu_probe {config.backend} backend"]
    if declared is not None:
        source_bits.append("theoretical values from declaration")
    if not declared_bw:
        source_bits.append("theoretical bandwidth not declared; set to measured")
        notes.append("theoretical bandwidth not declared; set to measured")
    text = emit_profile_json(
        name=name, architecture_class=arch_class,
        bandwidth_theoretical=theo_bw, bandwidth_measured=bandwidth,
        peaks=peaks, source="; ".join(source_bits),
        timestamp=timestamp or time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    return text, notes


def _int_list(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in raw.split(",") if v)
    except ValueError:
        raise ProbeUserError(f"bad integer list {raw!r}") from None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gpu_probe.py",
        description="accelerator bandwidth/matmul peak probe emitting a hardware profile")
    parser.add_argument("--backend", required=False, default=None,
                        choices=sorted(ARCH_CLASS_FOR_BACKEND))
    parser.add_argument("--out", metavar="FILE")
    parser.add_argument("--name", default="accelerator")
    parser.add_argument("--declare", metavar="FILE",
                        help="hardware profile JSON holding theoretical values")
    parser.add_argument("--tensor-elems", dest="tensor_elems", metavar="N[,N..]")
    parser.add_argument("--matmul-sizes", dest="matmul_sizes", metavar="M[,M..]")
    parser.add_argument("--repetitions", type=int, default=20)
    parser.add_argument("--warmup", type=int, default=3)
    parser.add_argument("--precisions", metavar="P[,P..]",
                        help="subset of fp16,fp32 (default depends on backend)")
    parser.add_argument("--show-counts", action="store_true",
                        help="print static FLOP/traffic denominators and exit")
    parser.add_argument("--lock-file", dest="lock_file", metavar="FILE",
                        help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    try:
        if args.show_counts:
            sizes = _int_list(args.matmul_sizes) if args.matmul_sizes else DEFAULT_MATMUL_SIZES
            counts = {
                "matmul_flops": {str(m): matmul_flops(m) for m in sizes},
                "add_traffic_bytes_per_element": {
                    p: add_traffic_bytes(1, e) for p, e in ELEMENT_BYTES.items()},
            }
            json.dump(counts, sys.stdout, indent=2)
            sys.stdout.write("\n")
            return 0
        if not args.backend:
            parser.error("--backend is required unless --show-counts is given")
        config = AccelProbeConfig(
            backend=args.backend,
            tensor_elems=_int_list(args.tensor_elems) if args.tensor_elems
            else DEFAULT_TENSOR_ELEMS,
            matmul_sizes=_int_list(args.matmul_sizes) if args.matmul_sizes
            else DEFAULT_MATMUL_SIZES,
            repetitions=args.repetitions,
            warmup=args.warmup,
            precisions=tuple(args.precisions.split(",")) if args.precisions else ())
        declared = load_declared(args.declare) if args.declare else None
        lock = InstanceLock(Path(args.lock_file) if args.lock_file else None)
        with lock:
            text, notes = run_probe(config, args.name, declared)
        for note in notes:
            print(note, file=sys.stderr)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            print(f"wrote {args.out}", file=sys.stderr)
        else:
            sys.stdout.write(text)
        return 0
    except ProbeUserError as exc:
        print(f"gpu_probe: error: {exc}", file=sys.stderr)
        return 1
    except ProbeDefect as exc:
        print(f"gpu_probe: defect: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"gpu_probe: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
