"""Softmax, multi-head and Sinkhorn attention used as comparison baselines."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .csp import csp_forward
from .permutation import to_dense

__all__ = [
    "softmax_rows",
    "attention_map",
    "softmax_attention",
    "AttentionParams",
    "init_attention_params",
    "multi_head_attention",
    "sinkhorn_normalize",
    "log_sinkhorn",
    "SinkhornConfig",
    "SinkhornResult",
    "grouped_sinkhorn_attention",
    "TAU_GRID",
    "sinkhorn_csp_distances",
]

TAU_GRID = (1.0, 0.3, 0.1, 0.03, 0.01)


def softmax_rows(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_qkv(v, q, k):
    v = np.asarray(v, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.ndim != 2 or q.shape != k.shape or v.ndim != 2 or v.shape[0] != q.shape[0]:
        raise ShapeError(
            f"incompatible attention operands q{q.shape} k{k.shape} v{v.shape}",
            q.shape,
            k.shape,
            v.shape,
        )
    return v, q, k


def attention_map(q, k):
    """Row-stochastic map ``softmax(Q K^T / sqrt(D))``."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if q.shape != k.shape:
        raise ShapeError(f"q{q.shape} and k{k.shape} differ", q.shape, k.shape)
    return softmax_rows(q @ k.T / np.sqrt(q.shape[1]))


def softmax_attention(v, q, k, chunk=None):
    """``softmax(Q K^T / sqrt(D)) V`` with row-max stabilisation.

    ``chunk`` bounds the number of query rows processed at once so that long
    sequences never hold the full N x N map in memory.
    """
    v, q, k = _check_qkv(v, q, k)
    scale = 1.0 / np.sqrt(q.shape[1])
    n = q.shape[0]
    if chunk is None or chunk >= n:
        return softmax_rows(q @ k.T * scale) @ v
    out = np.empty((n, v.shape[1]))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        out[start:stop] = softmax_rows(q[start:stop] @ k.T * scale) @ v
    return out


@dataclass(frozen=True)
class AttentionParams:
    """Per-head projections, each of shape C x D with ``heads * D == C``."""

    wq: tuple
    wk: tuple
    wv: tuple

    def __post_init__(self):
        if not (len(self.wq) == len(self.wk) == len(self.wv) >= 1):
            raise ConfigError("wq, wk, wv need the same positive head count", key="heads")
        shapes = {np.shape(w) for w in (*self.wq, *self.wk, *self.wv)}
        if len(shapes) != 1:
            raise ShapeError(f"projection shapes differ: {sorted(shapes)}", *sorted(shapes))
        c, d = shapes.pop()
        if self.heads * d != c:
            raise ConfigError(
                f"heads*D must equal C (got {self.heads}*{d} != {c})", key="heads"
            )

    @property
    def heads(self):
        return len(self.wq)

    @property
    def model_dim(self):
        return np.shape(self.wq[0])[0]

    @property
    def head_dim(self):
        return np.shape(self.wq[0])[1]


def init_attention_params(c, heads, rng, scale=None):
    """Gaussian projections with standard deviation ``scale`` (default 1/sqrt(C))."""
    if c % heads:
        raise ConfigError(f"heads={heads} does not divide C={c}", key="heads")
    d = c // heads
    s = 1.0 / np.sqrt(c) if scale is None else scale
    draw = lambda: tuple(rng.normal(0.0, s, (c, d)) for _ in range(heads))  # noqa: E731
    return AttentionParams(draw(), draw(), draw())


def multi_head_attention(x, params):
    """Concatenate ``Att(X Wv_m; X Wq_m, X Wk_m)`` over heads (no output projection)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.model_dim:
        raise ShapeError(
            f"input {x.shape} does not match model dim {params.model_dim}", x.shape
        )
    heads = [
        softmax_attention(x @ wv, x @ wq, x @ wk)
        for wq, wk, wv in zip(params.wq, params.wk, params.wv)
    ]
    return np.concatenate(heads, axis=1)


def sinkhorn_normalize(a, t):
    """``t`` Sinkhorn iterations, each a row normalisation then a column one."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {a.shape}", a.shape)
    if t < 0:
        raise ConfigError("iterations must be >= 0", key="iterations")
    if not np.all(a > 0):
        raise ValueError("Sinkhorn input must be strictly positive")
    if not np.all(np.isfinite(a)):
        raise ValueError("Sinkhorn input must be finite")
    out = a.copy()
    for _ in range(t):
        out /= out.sum(axis=1, keepdims=True)
        out /= out.sum(axis=0, keepdims=True)
    return out


def _logsumexp(x, axis):
    m = x.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))


def log_sinkhorn(log_a, t):
    """Sinkhorn iterations carried out on ``log(a)``; returns ``a`` normalised.

    Same iteration as :func:`sinkhorn_normalize`, but kernels such as
    ``exp(x / 0.01)`` stay representable. Works on stacks of matrices over
    the last two axes.
    """
    out = np.array(log_a, dtype=np.float64)
    for _ in range(t):
        out -= _logsumexp(out, axis=-1)
        out -= _logsumexp(out, axis=-2)
    return np.exp(out)


@dataclass(frozen=True)
class SinkhornConfig:
    iterations: int = 100
    temperature: float = 1.0
    groups: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0", key="iterations")
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0", key="temperature")
        if self.groups < 1:
            raise ConfigError("groups must be >= 1", key="groups")


@dataclass(frozen=True)
class SinkhornResult:
    output: np.ndarray
    maps: list
    max_row_deviation: float
    max_col_deviation: float

    @property
    def doubly_stochastic(self):
        return max(self.max_row_deviation, self.max_col_deviation) <= 1e-9


def grouped_sinkhorn_attention(v, cfg, reference_channel=0):
    """Block-diagonal Sinkhorn maps of every channel against the reference.

    ``v`` holds the values after any circular shifts; the reference column
    must be the unshifted one. For channel c and group k the kernel is
    ``exp(ref_k value_k^T / tau)``.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {v.shape}", v.shape)
    n, c = v.shape
    k = cfg.groups
    if n % k:
        raise ConfigError(f"group count K={k} does not divide N={n}", key="groups")
    g = n // k
    ref = v[:, reference_channel].reshape(k, g)
    vals = v.T.reshape(c, k, g)
    log_kernel = ref[None, :, :, None] * vals[:, :, None, :] / cfg.temperature
    if cfg.iterations == 0:
        if np.any(log_kernel > 709.0):
            raise ValueError("kernel overflows float64; use t >= 1 or a larger tau")
        blocks = np.exp(log_kernel)
    else:
        blocks = log_sinkhorn(log_kernel, cfg.iterations)
    maps = []
    out = np.empty_like(v)
    for ch in range(c):
        m = np.zeros((n, n))
        for grp in range(k):
            sl = slice(grp * g, (grp + 1) * g)
            m[sl, sl] = blocks[ch, grp]
        maps.append(m)
        out[:, ch] = m @ v[:, ch]
    stacked = np.stack(maps)
    row_dev = float(np.abs(stacked.sum(axis=2) - 1.0).max())
    col_dev = float(np.abs(stacked.sum(axis=1) - 1.0).max())
    return SinkhornResult(out, maps, row_dev, col_dev)


def sinkhorn_csp_distances(v, csp_cfg, taus=TAU_GRID, iterations=None):
    """Max-abs gap between ``T_{c,t,tau} S_c`` and CSP's hard ``P_c`` per tau.

    Channels are shifted by the CSP schedule first, then the grouped Sinkhorn
    maps are composed with the same shifts. ``iterations`` maps tau to t and
    defaults to ``ceil(50 / tau)``.
    """
    v = np.asarray(v, dtype=np.float64)
    n, c = v.shape
    _, trace = csp_forward(v, csp_cfg)
    hard = np.stack([to_dense(p) for p in trace.total])
    shifts = [to_dense(p) for p in trace.shift]
    shifted = np.stack([trace.shift[ch].apply(v[:, ch]) for ch in range(c)], axis=1)
    out = []
    for tau in taus:
        t = int(np.ceil(50.0 / tau)) if iterations is None else iterations(tau)
        res = grouped_sinkhorn_attention(
            shifted, SinkhornConfig(t, tau, csp_cfg.groups), csp_cfg.reference_channel
        )
        soft = np.stack([m @ s for m, s in zip(res.maps, shifts)])
        out.append(float(np.abs(soft - hard).max()))
    return out
