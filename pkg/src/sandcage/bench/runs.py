"""The benchmarks.  Every timing sample is in nanoseconds."""

from __future__ import annotations

import gc
import os
import random
import statistics
import threading
import time
import tracemalloc
from typing import Any, Sequence

from ..rli.format import encode, oracle_decode, random_image
from ..rli.host import decode_with
from ..runtime import Sandbox, create_sandbox, default_region_size
from .report import BenchReport

WARMUP = 1000


def _sync_options(backend: str, sync: str | None) -> dict[str, Any]:
    return {"sync": sync} if backend == "process" and sync else {}


def transfer_latency(
    backend: str,
    *,
    sync: str | None = None,
    iters: int = 100_000,
    warmup: int = WARMUP,
    region_size: int | None = None,
) -> BenchReport:
    """Empty guest call round trips (host -> guest -> host), one sample per call."""
    size = region_size or default_region_size()
    sb = create_sandbox(backend, size, **_sync_options(backend, sync))
    try:
        fn = sb.lookup("rli_noop")
        invoke = sb.invoke
        for _ in range(warmup):
            invoke(fn)
        clock = time.perf_counter_ns
        samples: list[float] = []
        append = samples.append
        for _ in range(iters):
            t0 = clock()
            invoke(fn)
            append(clock() - t0)
    finally:
        sb.destroy()
    params = {"iters": iters, "warmup": warmup, "sync": sync if backend == "process" else None, "region_size": size}
    return BenchReport("transfer-latency", backend, params, samples)


def creation(
    backend: str,
    *,
    count: int = 200,
    warmup: int = 10,
    region_size: int | None = None,
    sync: str | None = None,
) -> BenchReport:
    """Time to a usable sandbox (region mapped, guest ready); destruction is not timed."""
    size = region_size or default_region_size()
    opts = _sync_options(backend, sync)
    samples: list[float] = []
    for i in range(warmup + count):
        t0 = time.perf_counter_ns()
        sb = create_sandbox(backend, size, **opts)
        dt = time.perf_counter_ns() - t0
        sb.destroy()
        if i >= warmup:
            samples.append(dt)
    return BenchReport("creation", backend, {"count": count, "warmup": warmup, "region_size": size}, samples)


def _worker_pss(sb: Sandbox) -> int:
    pid = getattr(sb.backend, "pid", None)
    if not pid:
        return 0
    try:
        with open(f"/proc/{pid}/smaps_rollup", encoding="ascii") as fh:
            for line in fh:
                if line.startswith("Pss:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        pass
    return 0


def _rss() -> int:
    with open("/proc/self/statm", encoding="ascii") as fh:
        return int(fh.read().split()[1]) * os.sysconf("SC_PAGE_SIZE")


def sandbox_footprint(sb: Sandbox) -> int:
    """Bytes a sandbox holds outside the host heap: resident region pages plus a worker's PSS."""
    return sb.memory_bytes() + _worker_pss(sb)


def default_image(seed: int = 0, dim: int = 128) -> bytes:
    rng = random.Random(seed)
    w, h, px = random_image(rng, dim, dim)
    return encode(px, w, h)


def scaling(
    sandboxes: int,
    image: bytes,
    *,
    backend: str = "emusfi",
    threads: int | None = None,
    region_size: int | None = None,
    rounds: int = 1,
    mem_batch: int | None = None,
) -> BenchReport:
    """Create ``sandboxes`` instances, then decode ``image`` in all of them from a thread pool.

    Memory: sandboxes are added in batches of ``mem_batch`` (default K/8),
    each created and used for one decode.  A batch's growth of traced host
    allocations plus the new sandboxes' own footprints, divided by the batch
    size, is the per-sandbox increment for that batch; batching averages out
    interpreter free-list churn of a few KB.  Samples: per-sandbox decode
    time in the concurrent phase.  Raises ``AssertionError`` if any output
    differs from the oracle.
    """
    if sandboxes < 1:
        raise ValueError("need at least one sandbox")
    batch = mem_batch or max(1, sandboxes // 8)
    size = region_size or default_region_size()
    nthreads = threads or min(sandboxes, os.cpu_count() or 1)
    _, _, want = oracle_decode(image)

    sbs: list[Sandbox] = []
    increments: list[int] = []
    rss0 = _rss()
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    try:
        # warm up under tracing: interpreter caches (e.g. per-code frame reuse) swap
        # allocations in and out, and an untraced free would look like growth
        for _ in range(8):
            warm = create_sandbox(backend, size)
            decode_with(warm, image)
            warm.destroy()
        del warm
        gc.collect()
        prev = tracemalloc.get_traced_memory()[0]
        while len(sbs) < sandboxes:
            added: list[Sandbox] = []
            for _ in range(min(batch, sandboxes - len(sbs))):
                sb = create_sandbox(backend, size)
                sbs.append(sb)
                added.append(sb)
                if decode_with(sb, image)[2] != want:
                    raise AssertionError("decode differs from the oracle while populating")
            gc.collect()
            cur = tracemalloc.get_traced_memory()[0]
            grown = cur - prev + sum(sandbox_footprint(s) for s in added)
            increments.append(grown // len(added))
            prev = cur
    finally:
        if not was_tracing:
            tracemalloc.stop()
    rss_growth = _rss() - rss0

    samples: list[float] = []
    wrong: list[int] = []
    lock = threading.Lock()
    start = threading.Barrier(nthreads)

    def drive(mine: Sequence[int]) -> None:
        start.wait()
        for _ in range(rounds):
            for i in mine:
                t0 = time.perf_counter_ns()
                got = decode_with(sbs[i], image)[2]
                dt = time.perf_counter_ns() - t0
                with lock:
                    samples.append(dt)
                    if got != want:
                        wrong.append(i)

    try:
        pool = [threading.Thread(target=drive, args=(range(t, sandboxes, nthreads),)) for t in range(nthreads)]
        for t in pool:
            t.start()
        for t in pool:
            t.join()
    finally:
        for sb in sbs:
            sb.destroy()
    if wrong:
        raise AssertionError(f"{len(wrong)} decodes differ from the oracle")
    mean = statistics.fmean(increments)
    params = {
        "sandboxes": sandboxes,
        "threads": nthreads,
        "rounds": rounds,
        "mem_batch": batch,
        "region_size": size,
        "image_bytes": len(image),
        "mem_increments": increments,
        "mem_max_deviation": max(abs(d - mean) for d in increments) / mean if mean else 0.0,
        "rss_growth_bytes": rss_growth,
    }
    return BenchReport("scaling", backend, params, samples, mem_bytes_per_sandbox=mean)


def load_corpus(path: str | None, *, images: int = 50, seed: int = 0, max_dim: int = 128) -> list[bytes]:
    """``*.rli`` files under ``path``, or seeded random images when ``path`` is ``None``."""
    if path is None:
        rng = random.Random(seed)
        out = []
        for _ in range(images):
            w, h, px = random_image(rng, max_dim, max_dim)
            out.append(encode(px, w, h))
        return out
    names = sorted(n for n in os.listdir(path) if n.endswith(".rli"))
    if not names:
        raise ValueError(f"no .rli files in {path}")
    corpus = []
    for n in names:
        with open(os.path.join(path, n), "rb") as fh:
            corpus.append(fh.read())
    return corpus


def decode(
    backend: str,
    corpus: Sequence[bytes],
    *,
    warmup: int = 10,
    region_size: int | None = None,
    sync: str | None = None,
) -> BenchReport:
    """Per-image decode time on ``backend`` and, for reference, on ``null``."""
    size = region_size or default_region_size()

    def run(kind: str, opts: dict[str, Any]) -> list[float]:
        sb = create_sandbox(kind, size, **opts)
        try:
            for i in range(warmup):
                decode_with(sb, corpus[i % len(corpus)])
            times: list[float] = []
            for data in corpus:
                t0 = time.perf_counter_ns()
                decode_with(sb, data)
                times.append(time.perf_counter_ns() - t0)
            return times
        finally:
            sb.destroy()

    samples = run(backend, _sync_options(backend, sync))
    base = samples if backend in ("null", "null-direct") else run("null", {})
    total = sum(len(d) for d in corpus)
    params = {
        "images": len(corpus),
        "input_bytes": total,
        "warmup": warmup,
        "region_size": size,
        "throughput_bytes_per_s": total / (sum(samples) / 1e9),
        "null_throughput_bytes_per_s": total / (sum(base) / 1e9),
        "relative_overhead": sum(samples) / sum(base),
    }
    return BenchReport("decode", backend, params, samples)
