"""Wall-clock scaling measurements for the approximate and exact paths."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import exact_attention
from .hyper import HyperParams, causal_hyper_attention, hyper_attention
from .synthetic import gaussian_inputs


@dataclass
class BenchRow:
    n: int
    variant: str
    median_s: float
    repeats: int


def median_time(fn: Callable[[], object], repeats: int = 5, warmup: int = 1) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def loglog_slope(ns: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(n)."""
    return float(np.polyfit(np.log(ns), np.log(times), 1)[0])


def _runner(variant: str, inputs, params: HyperParams):
    q, k, v = inputs.q, inputs.k, inputs.v
    if variant == "hyper":
        return lambda: hyper_attention(inputs, None, params)
    if variant == "hyper_causal":
        return lambda: causal_hyper_attention(inputs, params)
    if variant == "exact":
        return lambda: exact_attention(q, k, v)
    if variant == "exact_causal":
        return lambda: exact_attention(q, k, v, causal=True)
    raise ValueError(f"unknown variant {variant!r}")


def run_bench(
    hyper_grid: Sequence[int],
    exact_grid: Sequence[int],
    d: int = 64,
    params: HyperParams = HyperParams(),
    repeats: int = 5,
    causal: bool = False,
    seed: int = 0,
) -> list[BenchRow]:
    """Time the approximate path on ``hyper_grid`` plus ``exact_grid`` and the
    exact path on ``exact_grid``; forward pass only."""
    suffix = "_causal" if causal else ""
    rows = []
    for n in sorted(set(hyper_grid) | set(exact_grid)):
        inputs = gaussian_inputs(n, d, seed)
        rows.append(BenchRow(n, "hyper" + suffix, median_time(_runner("hyper" + suffix, inputs, params), repeats), repeats))
        if n in exact_grid:
            rows.append(BenchRow(n, "exact" + suffix, median_time(_runner("exact" + suffix, inputs, params), repeats), repeats))
    return rows


def summarize(rows: Sequence[BenchRow], hyper_grid: Sequence[int], exact_grid: Sequence[int]) -> dict:
    """Log-log slopes on each grid and the speedup on the exact grid."""
    def series(prefix, grid):
        pts = sorted((r.n, r.median_s) for r in rows if r.variant.startswith(prefix) and r.n in grid)
        return [p[0] for p in pts], [p[1] for p in pts]

    hn, ht = series("hyper", hyper_grid)
    en, et = series("exact", exact_grid)
    shared = sorted(set(exact_grid))
    hyper_at = dict(zip(*series("hyper", shared)))
    exact_at = dict(zip(en, et))
    speedup = [exact_at[n] / hyper_at[n] for n in shared if n in hyper_at and n in exact_at]
    return {
        "hyper_slope": loglog_slope(hn, ht) if len(hn) > 1 else float("nan"),
        "exact_slope": loglog_slope(en, et) if len(en) > 1 else float("nan"),
        "speedup_grid": shared,
        "speedup": speedup,
        "speedup_increasing": all(b > a for a, b in zip(speedup, speedup[1:])),
    }
