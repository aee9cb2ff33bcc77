"""Channel-wise sample permutation (CSP) operator.

Every value channel is circularly shifted by its scheduled step and then
group-sorted against the (unshifted) reference channel, so channel c is
multiplied by a permutation matrix ``P_c = T_c S_c``. The operator never
materialises these N x N matrices unless asked to.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import as_matrix, matmul
from .permutation import (
    Permutation,
    ShiftSchedule,
    compose,
    group_sort_maps,
    resolve_schedule,
    to_dense,
)

__all__ = [
    "CspConfig",
    "CspTrace",
    "csp_forward",
    "csp_maps",
    "apply_maps",
    "apply_trace",
    "extract_attention_maps",
    "shift_only_heads",
    "cross_channel_interaction",
]


@dataclass(frozen=True)
class CspConfig:
    channels: int
    groups: int = 1
    schedule: ShiftSchedule = ShiftSchedule()
    reference_channel: int = 0
    projection: np.ndarray | None = None

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError("channels must be >= 1", key="channels")
        if self.groups < 1:
            raise ConfigError("groups must be >= 1", key="groups")
        if not 0 <= self.reference_channel < self.channels:
            raise ConfigError(
                f"reference channel {self.reference_channel} out of range for "
                f"{self.channels} channels",
                key="reference_channel",
            )
        if self.projection is not None:
            w = np.asarray(self.projection, dtype=np.float64)
            if w.shape != (self.channels, self.channels):
                raise ShapeError(
                    f"projection must be {self.channels}x{self.channels}, got {w.shape}",
                    w.shape,
                )
            object.__setattr__(self, "projection", w)

    def channel_steps(self, n):
        """Per-channel steps for length ``n``, with the reference at slot 0."""
        steps = resolve_schedule(self.schedule, n, self.channels).steps
        slots = (np.arange(self.channels) - self.reference_channel) % self.channels
        return steps[slots]

    def with_projection(self, w):
        return CspConfig(self.channels, self.groups, self.schedule, self.reference_channel, w)


@dataclass(frozen=True)
class CspTrace:
    """Per-channel permutations recorded by one forward pass."""

    shift: tuple
    sort: tuple
    total: tuple
    reference_channel: int = 0

    @property
    def channels(self):
        return len(self.total)

    def total_maps(self):
        return np.stack([p.map for p in self.total], axis=1)


def _check_input(x, cfg):
    x = as_matrix(x)
    n, c = x.shape
    if c != cfg.channels:
        raise ShapeError(f"input has {c} channels, config expects {cfg.channels}", x.shape)
    if n % cfg.groups != 0:
        raise ConfigError(f"group count K={cfg.groups} does not divide N={n}", key="groups")
    return x


def _values(x, cfg):
    return x if cfg.projection is None else matmul(x, cfg.projection)


def csp_maps(v, cfg):
    """Shift, sort and total index maps (each ``(N, C)``) for values ``v``."""
    n, c = v.shape
    steps = cfg.channel_steps(n)
    shift = (np.arange(n)[:, None] - steps[None, :]) % n
    shifted = np.take_along_axis(v, shift, axis=0)
    sort = group_sort_maps(v[:, cfg.reference_channel], shifted, cfg.groups)
    ref = cfg.reference_channel
    sort[:, ref] = np.arange(n)
    total = np.take_along_axis(shift, sort, axis=0)
    return shift, sort, total


def apply_maps(v, maps):
    return np.take_along_axis(np.asarray(v, dtype=np.float64), maps, axis=0)


def csp_forward(x, cfg, trace=True):
    """Apply CSP to ``x`` (N x C). Returns ``(output, trace)``.

    With ``trace=False`` the per-channel Permutation objects are not built
    and the second element is None; this is the path timed by the benchmark.
    """
    x = _check_input(x, cfg)
    v = _values(x, cfg)
    shift, sort, total = csp_maps(v, cfg)
    out = apply_maps(v, total)
    if not trace:
        return out, None
    t = CspTrace(
        shift=tuple(Permutation(shift[:, i], check=False) for i in range(cfg.channels)),
        sort=tuple(Permutation(sort[:, i], check=False) for i in range(cfg.channels)),
        total=tuple(Permutation(total[:, i], check=False) for i in range(cfg.channels)),
        reference_channel=cfg.reference_channel,
    )
    return out, t


def apply_trace(x, cfg, trace):
    """CSP with the permutations frozen from an earlier pass (linear in ``x``)."""
    x = _check_input(x, cfg)
    return apply_maps(_values(x, cfg), trace.total_maps())


def extract_attention_maps(trace):
    """Dense N x N permutation matrix of every channel."""
    return [to_dense(p) for p in trace.total]


def shift_only_heads(v):
    """Shift channel c (0-based) circularly by ``c mod N`` steps."""
    v = as_matrix(v)
    n, c = v.shape
    idx = (np.arange(n)[:, None] - (np.arange(c) % n)[None, :]) % n
    return np.take_along_axis(v, idx, axis=0)


def cross_channel_interaction(trace, c, c_prime):
    """Relative permutation ``P_c^T P_c'`` between two channels."""
    for i in (c, c_prime):
        if not 0 <= i < trace.channels:
            raise IndexError(f"channel {i} out of range for {trace.channels} channels")
    return compose(trace.total[c].inverse(), trace.total[c_prime])
