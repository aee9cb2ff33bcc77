"""Toy CSP-former and MHA-former classifiers on top of the tape engine.

Block: ``X <- X + Att(X)``, then ``X <- X + FFN(X)`` with a ReLU FFN of
width ``hidden``. Without skip connections each update replaces X. The
pooled representation (mean over positions or the first position) feeds a
linear head.
"""

from dataclasses import dataclass, field

import numpy as np

from ..csp import CspConfig, csp_maps
from ..errors import ConfigError, ShapeError
from ..permutation import ShiftSchedule
from .autodiff import Tape

__all__ = [
    "ModelSpec",
    "ForwardResult",
    "init_params",
    "forward_model",
    "param_count",
    "attention_param_count",
    "matched_mha_dim",
]

JITTER = 1e-9


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    layers: int
    model_dim: int
    vocab: int
    seq_len: int
    classes: int = 2
    heads: int = 1
    groups: int = 1
    schedule: ShiftSchedule = field(default_factory=ShiftSchedule)
    pooling: str = "mean"
    hidden: int | None = None
    skip_connections: bool = True

    def __post_init__(self):
        if self.kind not in ("csp", "mha"):
            raise ConfigError(f"unknown model kind {self.kind!r}", key="kind")
        if self.pooling not in ("mean", "cls"):
            raise ConfigError(f"unknown pooling {self.pooling!r}", key="pooling")
        for key in ("layers", "model_dim", "vocab", "seq_len", "classes", "heads", "groups"):
            if getattr(self, key) < (0 if key == "layers" else 1):
                raise ConfigError(f"{key} must be positive", key=key)
        if self.kind == "mha" and self.model_dim % self.heads:
            raise ConfigError(f"heads={self.heads} does not divide C={self.model_dim}", key="heads")
        if self.kind == "csp" and self.seq_len % self.groups:
            raise ConfigError(f"K={self.groups} does not divide N={self.seq_len}", key="groups")

    @property
    def ffn_width(self):
        return self.model_dim if self.hidden is None else self.hidden

    def csp_config(self, layer):
        sched = self.schedule
        if sched.kind == "power":
            sched = ShiftSchedule.power(layer, self.layers, sched.base)
        return CspConfig(self.model_dim, self.groups, sched)


def _shapes(spec):
    c, h = spec.model_dim, spec.ffn_width
    out = {"tok_emb": (spec.vocab, c), "pos_emb": (spec.seq_len, c)}
    for l in range(spec.layers):
        if spec.kind == "csp":
            out[f"l{l}.w"] = (c, c)
        else:
            for name in ("wq", "wk", "wv"):
                out[f"l{l}.{name}"] = (c, c)
        out[f"l{l}.ffn1"] = (c, h)
        out[f"l{l}.b1"] = (h,)
        out[f"l{l}.ffn2"] = (h, c)
        out[f"l{l}.b2"] = (c,)
    out["head.w"] = (c, spec.classes)
    out["head.b"] = (spec.classes,)
    return out


def attention_param_count(spec):
    """Trainable parameters of one attention sublayer: C^2 (CSP) or 3 C^2 (MHA)."""
    c = spec.model_dim
    return c * c if spec.kind == "csp" else 3 * c * c


def param_count(spec):
    return int(sum(np.prod(s) for s in _shapes(spec).values()))


def matched_mha_dim(csp_spec, heads):
    """MHA model width (a multiple of ``heads``) whose total count is closest to ``csp_spec``."""
    target = param_count(csp_spec)
    best = None
    for c in range(heads, 2 * csp_spec.model_dim + heads, heads):
        trial = ModelSpec(
            "mha", csp_spec.layers, c, csp_spec.vocab, csp_spec.seq_len, csp_spec.classes,
            heads=heads, pooling=csp_spec.pooling, skip_connections=csp_spec.skip_connections,
        )
        gap = abs(param_count(trial) - target)
        if best is None or gap < best[0]:
            best = (gap, c)
    return best[1]


def init_params(spec, seed=0, dtype=np.float64):
    """Gaussian init: std 1/sqrt(fan_in) for matrices, 1/sqrt(C) for token and 0.02 for position embeddings.

    Biases start at zero.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _shapes(spec).items():
        if name.endswith("emb"):
            w = rng.normal(0.0, 0.02 if name == "pos_emb" else 1.0 / np.sqrt(shape[1]), shape)
        elif len(shape) == 1:
            w = np.zeros(shape)
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
        params[name] = w.astype(dtype)
    return params


@dataclass
class ForwardResult:
    logits: object
    tape: Tape
    maps: list
    loss: object = None
    sublayers: list = field(default_factory=list)


def _batch_csp_maps(v, cfg):
    return np.stack([csp_maps(v[b], cfg)[2] for b in range(v.shape[0])])


def _mha(tape, x, spec, layer):
    c, m = spec.model_dim, spec.heads
    d = c // m
    q = tape.matmul(x, tape.params[f"l{layer}.wq"])
    k = tape.matmul(x, tape.params[f"l{layer}.wk"])
    v = tape.matmul(x, tape.params[f"l{layer}.wv"])
    heads = []
    for h in range(m):
        qh, kh, vh = (tape.columns(t, h * d, (h + 1) * d) for t in (q, k, v))
        logits = tape.scale(tape.matmul(qh, tape.transpose(kh)), 1.0 / np.sqrt(d))
        heads.append(tape.matmul(tape.softmax(logits), vh))
    return heads[0] if m == 1 else tape.concat(heads)


def forward_model(spec, params, tokens, labels=None, frozen=None, jitter_seed=None):
    """Run the model on ``tokens`` (B x N) and record everything on a new tape.

    ``frozen`` supplies per-layer CSP index maps (B x N x C) from an earlier
    pass instead of recomputing them from the current values. With
    ``labels`` the mean cross-entropy is recorded as ``result.loss``.
    ``result.sublayers`` keeps each CSP layer's (values, output) pair.
    ``jitter_seed`` adds 1e-9 Gaussian noise to the embeddings so that
    repeated tokens do not tie.
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[1] != spec.seq_len:
        raise ShapeError(f"tokens must be B x {spec.seq_len}, got {tokens.shape}", tokens.shape)
    if tokens.min() < 0 or tokens.max() >= spec.vocab:
        raise ConfigError(f"token ids must lie in [0, {spec.vocab})", key="vocab")
    tape = Tape()
    p = {name: tape.param(name, value) for name, value in params.items()}
    x = tape.add(tape.embed(p["tok_emb"], tokens), p["pos_emb"])
    if jitter_seed is not None:
        noise = np.random.default_rng(jitter_seed).normal(0.0, JITTER, x.shape)
        x = tape.add(x, noise.astype(x.value.dtype))
    maps, sublayers = [], []
    for l in range(spec.layers):
        if spec.kind == "csp":
            v = tape.matmul(x, p[f"l{l}.w"])
            m = frozen[l] if frozen is not None else _batch_csp_maps(v.value, spec.csp_config(l))
            maps.append(m)
            a = tape.permute_rows(v, m)
            sublayers.append((v.value, a.value))
        else:
            a = _mha(tape, x, spec, l)
        x = tape.add(x, a) if spec.skip_connections else a
        h = tape.relu(tape.add(tape.matmul(x, p[f"l{l}.ffn1"]), p[f"l{l}.b1"]))
        h = tape.add(tape.matmul(h, p[f"l{l}.ffn2"]), p[f"l{l}.b2"])
        x = tape.add(x, h) if spec.skip_connections else h
    pooled = tape.mean(x, axis=1) if spec.pooling == "mean" else tape.row(x, 0)
    logits = tape.add(tape.matmul(pooled, p["head.w"]), p["head.b"])
    loss = tape.cross_entropy(logits, labels) if labels is not None else None
    return ForwardResult(logits, tape, maps, loss, sublayers)
