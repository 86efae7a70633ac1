"""Benchmark harness comparing kernel backends and worker counts.

Two operations are measured: first-stage clustering of an (H, W, C)
embedding grid (the hot inference path, and the one that scales with the
worker count) and a conv forward+backward pass (the hot training path). Each
configuration is warmed up once (JIT compilation and caches) and timed over
several repeats; the best wall time is reported.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from embedseg import backend, kernels
from embedseg.meanshift import MeanShiftConfig, cluster
from embedseg.vmf import VmfMixtureSpec, labeled_mixture


@dataclass(frozen=True)
class BenchRow:
    op: str
    backend: str
    workers: int
    seconds: float


def _bench_grid(h: int, w: int, c: int, seed: int = 0) -> np.ndarray:
    spec = VmfMixtureSpec(
        dim=c, components=5, kappa=60.0,
        samples_per_component=(h * w) // 5 + 1, min_center_distance=0.3, seed=seed,
    )
    x, _, _ = labeled_mixture(spec)
    return x[: h * w].reshape(h, w, c).astype(np.float32)


def _timed(fn, repeats: int) -> float:
    fn()  # warmup: JIT + caches
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _sweep(op: str, fn, worker_counts, backends, repeats) -> list[BenchRow]:
    original = backend.get_backend()
    rows: list[BenchRow] = []
    try:
        for name in backends:
            backend.set_backend(name)
            counts = worker_counts if name == "numba" else (1,)
            for workers in counts:
                effective = backend.set_workers(workers) if name == "numba" else 1
                rows.append(
                    BenchRow(op=op, backend=name, workers=effective,
                             seconds=_timed(fn, repeats))
                )
    finally:
        backend.set_backend(original)
        backend.set_workers(1)
    return rows


def run_cluster_bench(
    h: int = 64,
    w: int = 64,
    c: int = 16,
    worker_counts: tuple[int, ...] = (1, 4),
    backends: tuple[str, ...] | None = None,
    repeats: int = 3,
    seed: int = 0,
) -> list[BenchRow]:
    if backends is None:
        backends = ("numba", "numpy") if backend.numba_available() else ("numpy",)
    grid = _bench_grid(h, w, c, seed)
    x = grid.reshape(-1, c)
    cfg = MeanShiftConfig()
    return _sweep("cluster", lambda: cluster(x, cfg, seed=0), worker_counts, backends, repeats)


def run_conv_bench(
    h: int = 64,
    w: int = 64,
    channels: tuple[int, int] = (16, 32),
    backends: tuple[str, ...] | None = None,
    repeats: int = 3,
    seed: int = 0,
) -> list[BenchRow]:
    """Forward plus both gradients of one 3x3 convolution layer."""
    if backends is None:
        backends = ("numba", "numpy") if backend.numba_available() else ("numpy",)
    rng = np.random.default_rng(seed)
    ci, co = channels
    x = rng.standard_normal((h, w, ci)).astype(np.float32)
    wk = rng.standard_normal((co, ci, 3, 3)).astype(np.float32)
    b = np.zeros(co, dtype=np.float32)
    gy = rng.standard_normal((h, w, co)).astype(np.float32)

    def step():
        kernels.conv2d_forward(x, wk, b, 1)
        kernels.conv2d_input_grad(gy, wk, 1, h, w)
        kernels.conv2d_param_grad(x, gy, 1, 3)

    return _sweep("conv", step, (1,), backends, repeats)


def scaling(rows: list[BenchRow], workers: int) -> float | None:
    """Speedup of the numba clustering path at ``workers`` threads over one."""
    one = next((r.seconds for r in rows
                if r.op == "cluster" and r.backend == "numba" and r.workers == 1), None)
    many = next((r.seconds for r in rows
                 if r.op == "cluster" and r.backend == "numba" and r.workers == workers), None)
    if one is None or many is None:
        return None
    return one / many


def format_rows(rows: list[BenchRow]) -> str:
    lines = [f"{'op':<8} {'backend':<8} {'workers':>7} {'seconds':>10}"]
    for r in rows:
        lines.append(f"{r.op:<8} {r.backend:<8} {r.workers:>7} {r.seconds:>10.4f}")
    return "\n".join(lines)
