"""Wall-clock scaling of CSP against softmax attention in the sequence length."""

import time
from dataclasses import dataclass

import numpy as np

from .baselines import softmax_attention
from .csp import CspConfig, csp_forward
from .errors import ConfigError, TimerResolutionError
from .permutation import ShiftSchedule

__all__ = ["BenchConfig", "BenchRow", "time_call", "fit_slope", "run_bench", "SLOPE_BANDS", "N_GRID"]

N_GRID = (256, 512, 1024, 2048, 4096, 8192)
SLOPE_BANDS = {"csp": (0.9, 1.4), "softmax": (1.7, 2.3)}
MIN_RESOLVABLE = 1000  # timings must span this many clock ticks


@dataclass(frozen=True)
class BenchConfig:
    ns: tuple = N_GRID
    channels: int = 64
    groups: int = 1
    methods: tuple = ("csp", "softmax")
    warmup: int = 3
    repeats: int = 7
    chunk: int = 512

    def __post_init__(self):
        unknown = set(self.methods) - set(SLOPE_BANDS)
        if unknown:
            raise ConfigError(f"unknown bench methods {sorted(unknown)}", key="methods")
        if self.repeats < 1 or self.warmup < 0:
            raise ConfigError("repeats must be >= 1 and warmup >= 0", key="repeats")


@dataclass(frozen=True)
class BenchRow:
    method: str
    n: int
    median_seconds: float


def time_call(fn, warmup=3, repeats=7):
    """Median of ``repeats`` monotonic-clock timings after ``warmup`` discarded calls."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    med = float(np.median(samples))
    tick = time.get_clock_info("perf_counter").resolution
    if med < MIN_RESOLVABLE * tick:
        raise TimerResolutionError(
            f"median {med:.3g}s is within {MIN_RESOLVABLE} ticks of the clock resolution; use larger N"
        )
    return med


def fit_slope(ns, seconds):
    """Least-squares slope of log(seconds) against log(n)."""
    if len(ns) < 2:
        return float("nan")
    return float(np.polyfit(np.log(ns), np.log(seconds), 1)[0])


def _workload(method, n, cfg, rng):
    x = rng.standard_normal((n, cfg.channels))
    if method == "csp":
        op = CspConfig(cfg.channels, cfg.groups, ShiftSchedule.linear())
        return lambda: csp_forward(x, op, trace=False)
    q, k = rng.standard_normal((2, n, cfg.channels))
    return lambda: softmax_attention(x, q, k, chunk=cfg.chunk)


def run_bench(cfg=BenchConfig(), seed=0):
    """Time every method at every N; returns ``(rows, slopes by method)``."""
    rng = np.random.default_rng(seed)
    rows = []
    slopes = {}
    for method in cfg.methods:
        times = []
        for n in cfg.ns:
            t = time_call(_workload(method, n, cfg, rng), cfg.warmup, cfg.repeats)
            rows.append(BenchRow(method, n, t))
            times.append(t)
        slopes[method] = fit_slope(cfg.ns, times)
    return rows, slopes
