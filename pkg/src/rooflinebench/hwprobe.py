"""Host-CPU peak bandwidth and compute probes.

Bandwidth uses STREAM-style copy/scale/add/triad kernels; compute uses
chains of independent fused multiply-adds. Both are compiled with numba so
the loops run at native speed and fan out across the configured threads.

Traffic and FLOP denominators are static counts (see ``kernel_bytes`` and
``fma_flops``), never inferred from measured time. Only one probe may run
at a time; a module-level token enforces that.
"""

from __future__ import annotations

import math
import platform
import threading
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import psutil

from .errors import ConfigError, ProbeError
from .roofline import ArchitectureClass, Bandwidth, HardwareProfile, Peak

MIB = 1024 * 1024
BUFFER_FLOOR_BYTES = 64 * MIB  # stay comfortably past any last-level cache

# (reads, writes) per element for each streaming kernel
KERNEL_ACCESSES = {
    "copy": (1, 1),
    "scale": (1, 1),
    "add": (2, 1),
    "triad": (2, 1),
}

FMA_UNROLL = 4  # inner repetitions of the accumulator block per iteration
FMA_LANES = 64  # independent accumulator chains per thread

_probe_token = threading.Lock()


def kernel_bytes(kernel: str, n_elements: int, element_bytes: int) -> int:
    """Bytes moved by one pass of a streaming kernel over n_elements."""
    reads, writes = KERNEL_ACCESSES[kernel]
    return (reads + writes) * n_elements * element_bytes


def fma_flops(iters: int, threads: int, lanes: int = FMA_LANES,
              unroll: int = FMA_UNROLL) -> int:
    """FLOPs executed by one FMA-chain trial (2 per multiply-accumulate)."""
    return 2 * lanes * unroll * iters * threads


@dataclass(frozen=True)
class ProbeConfig:
    """Parameters of a probe run. Defaults aim at DRAM, not cache."""

    buffer_bytes: tuple[int, ...] = ()
    repetitions: int = 10
    warmup: int = 3
    threads: int | str = "all"
    flops_precision: tuple[str, ...] = ("fp32",)
    min_trial_s: float = 0.05

    def __post_init__(self) -> None:
        if not self.buffer_bytes:
            object.__setattr__(self, "buffer_bytes", default_buffer_sizes())
        for size in self.buffer_bytes:
            if size < BUFFER_FLOOR_BYTES:
                raise ConfigError(
                    f"buffer of {size} bytes would fit in cache; floor is {BUFFER_FLOOR_BYTES}"
                )
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.warmup < 1:
            raise ConfigError("warmup must be >= 1")
        if self.threads != "all" and (not isinstance(self.threads, int) or self.threads < 1):
            raise ConfigError("threads must be a positive integer or 'all'")
        for prec in self.flops_precision:
            if prec not in ("fp32", "fp64"):
                raise ConfigError(f"flops_precision must be fp32 or fp64, got {prec!r}")

    def resolved_threads(self) -> int:
        import numba

        available = numba.get_num_threads()
        if self.threads == "all":
            return available
        return min(int(self.threads), available)


@dataclass
class ProbeResult:
    """Outcome of one probe. Reported values are maxima of per-size medians."""

    bandwidth_gbps: float | None = None
    flops_gflops: dict[str, float] = field(default_factory=dict)
    per_trial: list[dict[str, Any]] = field(default_factory=list)
    environment: dict[str, str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def merged_with(self, other: "ProbeResult") -> "ProbeResult":
        return ProbeResult(
            bandwidth_gbps=other.bandwidth_gbps or self.bandwidth_gbps,
            flops_gflops={**self.flops_gflops, **other.flops_gflops},
            per_trial=self.per_trial + other.per_trial,
            environment={**self.environment, **other.environment},
            notes=self.notes + other.notes,
        )


def default_buffer_sizes() -> tuple[int, ...]:
    """64 MiB / 256 MiB / 1 GiB, each capped so three arrays fit in free memory."""
    free = psutil.virtual_memory().available
    cap = max(BUFFER_FLOOR_BYTES, free // 6)
    sizes = []
    for candidate in (64 * MIB, 256 * MIB, 1024 * MIB):
        size = min(candidate, cap)
        if size not in sizes:
            sizes.append(size)
    return tuple(sizes)


def _environment() -> dict[str, str]:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "cpu_count": str(psutil.cpu_count(logical=True)),
    }


# -- numba kernels ------------------------------------------------------

_kernels: dict[str, Any] = {}


def _compiled_kernels() -> dict[str, Any]:
    """Compile the streaming and FMA kernels once, on first use."""
    if _kernels:
        return _kernels
    from numba import njit, prange

    @njit(parallel=True, fastmath=True, cache=False)
    def copy(dst, src):
        for i in prange(src.size):
            dst[i] = src[i]

    @njit(parallel=True, fastmath=True, cache=False)
    def scale(dst, src, q):
        for i in prange(src.size):
            dst[i] = q * src[i]

    @njit(parallel=True, fastmath=True, cache=False)
    def add(dst, a, b):
        for i in prange(a.size):
            dst[i] = a[i] + b[i]

    @njit(parallel=True, fastmath=True, cache=False)
    def triad(dst, a, b, q):
        for i in prange(a.size):
            dst[i] = a[i] + q * b[i]

    @njit(parallel=True, fastmath=True, cache=False)
    def fma(iters, nthreads, acc, out):
        # acc has one row of FMA_LANES accumulators per thread; the
        # multiplier keeps values near 1 so chains never over/underflow.
        lanes = acc.shape[1]
        for tid in prange(nthreads):
            m = acc.dtype.type(0.999999999)
            c = acc.dtype.type(1e-9)
            for _ in range(iters):
                for _ in range(FMA_UNROLL):
                    for j in range(lanes):
                        acc[tid, j] = acc[tid, j] * m + c
            s = acc.dtype.type(0.0)
            for j in range(lanes):
                s += acc[tid, j]
            out[tid] = s

    _kernels.update(copy=copy, scale=scale, add=add, triad=triad, fma=fma)
    return _kernels


def _timer_tick() -> float:
    """Smallest observable perf_counter increment on this host."""
    best = math.inf
    for _ in range(64):
        t0 = time.perf_counter()
        t1 = time.perf_counter()
        while t1 == t0:
            t1 = time.perf_counter()
        best = min(best, t1 - t0)
    return best


def _run_passes(fn, args, passes: int) -> float:
    t0 = time.perf_counter()
    for _ in range(passes):
        fn(*args)
    return time.perf_counter() - t0


def _timed_trial(fn, args, tick: float, min_trial_s: float) -> tuple[int, float]:
    """One trial, lengthened until it spans >= 50 timer ticks."""
    floor = max(50.0 * tick, min_trial_s)
    passes = 1
    elapsed = _run_passes(fn, args, passes)
    while elapsed < floor and passes < 1 << 20:
        scale = max(2.0, floor / max(elapsed, tick))
        passes = min(1 << 20, int(math.ceil(passes * scale)))
        elapsed = _run_passes(fn, args, passes)
    return passes, elapsed


def _allocate(n_elements: int, count: int, notes: list[str]) -> tuple[list[np.ndarray], int]:
    """Allocate ``count`` buffers, halving the size on MemoryError."""
    n = n_elements
    while True:
        try:
            arrays = [np.full(n, 1.0, dtype=np.float64) for _ in range(count)]
            if n != n_elements:
                notes.append(
                    f"downgraded buffer from {n_elements * 8} to {n * 8} bytes "
                    "after allocation failure"
                )
            return arrays, n
        except MemoryError:
            if n * 8 <= BUFFER_FLOOR_BYTES:
                raise ProbeError("cannot allocate even the floor-size probe buffers") from None
            n //= 2


def buffer_growth_notes(per_size_best: dict[int, float], slack: float = 0.20) -> list[str]:
    """Soft monotonicity check: past cache capacity, bigger buffers should not
    be meaningfully faster. DRAM timing is noisy, hence the slack."""
    notes = []
    sizes = sorted(per_size_best)
    for smaller, larger in zip(sizes, sizes[1:]):
        if per_size_best[larger] > per_size_best[smaller] * (1.0 + slack):
            notes.append(
                f"bandwidth rose from {per_size_best[smaller]:.2f} to "
                f"{per_size_best[larger]:.2f} GB/s between {smaller} and {larger} "
                f"byte buffers (beyond {slack:.0%} slack); cache effects suspected"
            )
    return notes


def measure_bandwidth(config: ProbeConfig) -> ProbeResult:
    """Peak sustained DRAM bandwidth across the four streaming kernels.

    For each buffer size and kernel the median trial is kept; the reported
    figure is the maximum of those medians (a ceiling is a peak, not a mean).
    """
    with _exclusive():
        kernels = _compiled_kernels()
        threads = _apply_threads(config)
        tick = _timer_tick()
        result = ProbeResult(environment=_environment())
        result.environment["threads"] = str(threads)
        medians: list[float] = []
        per_size_best: dict[int, float] = {}
        seen = set()
        for size in config.buffer_bytes:
            n_req = size // 8
            arrays, n = _allocate(n_req, 3, result.notes)
            if n in seen:
                continue
            seen.add(n)
            a, b, c = arrays
            q = 3.0
            calls = {
                "copy": (kernels["copy"], (c, a)),
                "scale": (kernels["scale"], (b, c, q)),
                "add": (kernels["add"], (c, a, b)),
                "triad": (kernels["triad"], (a, b, c, q)),
            }
            for name, (fn, args) in calls.items():
                for _ in range(config.warmup):
                    fn(*args)
                trials = []
                for rep in range(config.repetitions):
                    passes, elapsed = _timed_trial(fn, args, tick, config.min_trial_s)
                    moved = kernel_bytes(name, n, 8) * passes
                    gbps = moved / elapsed / 1e9
                    trials.append(gbps)
                    result.per_trial.append({
                        "kind": "bandwidth", "kernel": name, "buffer_bytes": n * 8,
                        "passes": passes, "seconds": elapsed, "gbps": gbps,
                    })
                median = float(np.median(trials))
                medians.append(median)
                key = n * 8
                per_size_best[key] = max(per_size_best.get(key, 0.0), median)
            del a, b, c, arrays
        result.notes.extend(buffer_growth_notes(per_size_best))
        result.bandwidth_gbps = max(medians)
        return result


def measure_flops(config: ProbeConfig) -> ProbeResult:
    """Peak compute throughput from unrolled FMA chains, per precision."""
    with _exclusive():
        kernels = _compiled_kernels()
        threads = _apply_threads(config)
        tick = _timer_tick()
        result = ProbeResult(environment=_environment())
        result.environment["threads"] = str(threads)
        for prec in config.flops_precision:
            dtype = np.float32 if prec == "fp32" else np.float64
            acc = np.linspace(1.0, 1.5, threads * FMA_LANES, dtype=dtype).reshape(
                threads, FMA_LANES)
            out = np.zeros(threads, dtype=dtype)
            fn = kernels["fma"]
            iters = 1 << 12
            fn(iters, threads, acc, out)  # warm compilation for this dtype
            # calibrate the iteration count toward the trial floor
            floor = max(50.0 * tick, config.min_trial_s)
            elapsed = _run_passes(fn, (iters, threads, acc, out), 1)
            while elapsed < floor and iters < 1 << 30:
                iters = min(1 << 30, int(iters * max(2.0, floor / max(elapsed, tick))))
                elapsed = _run_passes(fn, (iters, threads, acc, out), 1)
            for _ in range(config.warmup):
                fn(iters, threads, acc, out)
            trials = []
            for rep in range(config.repetitions):
                t0 = time.perf_counter()
                fn(iters, threads, acc, out)
                dt = time.perf_counter() - t0
                gflops = fma_flops(iters, threads) / dt / 1e9
                trials.append(gflops)
                result.per_trial.append({
                    "kind": "flops", "precision": prec, "iters": iters,
                    "threads": threads, "seconds": dt, "gflops": gflops,
                })
            result.flops_gflops[prec] = float(np.median(trials))
        return result


def _apply_threads(config: ProbeConfig) -> int:
    import numba

    threads = config.resolved_threads()
    numba.set_num_threads(threads)
    return threads


class _exclusive:
    """Probing owns the machine; concurrent probes would corrupt each other."""

    def __enter__(self):
        if not _probe_token.acquire(blocking=False):
            raise ProbeError("another probe is already running in this process")
        return self

    def __exit__(self, *exc):
        _probe_token.release()
        return False


def sanity_notes(result: ProbeResult, declared: HardwareProfile | None) -> list[str]:
    """Pass/fail notes comparing measured values against declared theoretical peaks."""
    notes: list[str] = []
    if declared is None:
        return notes
    if result.bandwidth_gbps is not None:
        theo = declared.bandwidth.theoretical
        verdict = "pass" if result.bandwidth_gbps <= theo else "FAIL"
        notes.append(
            f"bandwidth sanity {verdict}: measured {result.bandwidth_gbps:.2f} GB/s "
            f"vs theoretical {theo:.2f} GB/s"
        )
    for prec, measured in sorted(result.flops_gflops.items()):
        peak = declared.peaks.get(prec)
        if peak is not None and peak.theoretical is not None:
            verdict = "pass" if measured <= peak.theoretical else "FAIL"
            notes.append(
                f"{prec} compute sanity {verdict}: measured {measured:.2f} GFLOPS "
                f"vs theoretical {peak.theoretical:.2f} GFLOPS"
            )
    return notes


def emit_profile(
    result: ProbeResult,
    name: str,
    declared: HardwareProfile | None = None,
    architecture_class: ArchitectureClass = ArchitectureClass.GENERAL_CPU,
    timestamp: str | None = None,
) -> HardwareProfile:
    """Fold probe results (plus optional declared theoretical values) into a profile.

    When no theoretical bandwidth was declared the measured value stands in
    for it, noted in ``source``, since the schema requires one.
    """
    if result.bandwidth_gbps is None and not result.flops_gflops:
        raise ProbeError("no measurements to emit")
    source_bits = ["host probe"]
    if declared is not None:
        theo_bw = declared.bandwidth.theoretical
        arch_class = declared.architecture_class
        source_bits.append("theoretical values from declaration")
    else:
        theo_bw = None
        arch_class = architecture_class
    measured_bw = result.bandwidth_gbps
    if theo_bw is None:
        if measured_bw is None:
            raise ProbeError("flops-only probe needs declared bandwidth for a full profile")
        theo_bw = measured_bw
        source_bits.append("theoretical bandwidth not declared; set to measured")
    bandwidth = Bandwidth(theoretical=theo_bw, measured=measured_bw)
    peaks: dict[str, Peak] = {}
    declared_peaks = declared.peaks if declared is not None else {}
    for prec in sorted(set(declared_peaks) | set(result.flops_gflops)):
        theo = declared_peaks[prec].theoretical if prec in declared_peaks else None
        meas = result.flops_gflops.get(prec)
        if meas is None and prec in declared_peaks:
            meas = declared_peaks[prec].measured
        peaks[prec] = Peak(theoretical=theo, measured=meas)
    if timestamp is None:
        timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return HardwareProfile(
        name=name,
        architecture_class=arch_class,
        bandwidth=bandwidth,
        peaks=peaks,
        source="; ".join(source_bits),
        timestamp=timestamp,
    )
