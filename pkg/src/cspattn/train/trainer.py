"""SGD training loop, metrics history and the finite-difference gradient check."""

from dataclasses import dataclass

import numpy as np

from ..errors import CspError
from .autodiff import backward
from .models import forward_model, init_params

__all__ = [
    "METRICS_COLUMNS",
    "DivergenceError",
    "TrainConfig",
    "TrainResult",
    "train",
    "evaluate",
    "GradCheck",
    "gradient_check",
]

METRICS_COLUMNS = ("step", "loss", "accuracy", "model_kind", "task", "seed")


class DivergenceError(CspError, FloatingPointError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    lr: float = 0.1
    batch: int = 32
    eval_every: int = 50
    eval_size: int = 256
    cosine: bool = False
    dtype: str = "float64"


@dataclass
class TrainResult:
    params: dict
    history: list

    @property
    def final_accuracy(self):
        return self.history[-1][2]

    def rows(self):
        return list(self.history)


def evaluate(spec, params, batch):
    out = forward_model(spec, params, batch.tokens, batch.labels, jitter_seed=batch.jitter_seed)
    pred = out.logits.value.argmax(axis=1)
    return float(out.loss.value), float((pred == batch.labels).mean())


def train(spec, task, cfg=TrainConfig(), seed=0):
    """Plain SGD on fresh task batches.

    Accuracy is measured on a fixed batch of ``cfg.eval_size`` sequences
    drawn once from the task at the start, every ``eval_every`` steps and
    after the last step. History rows follow :data:`METRICS_COLUMNS`.
    """
    dtype = np.dtype(cfg.dtype)
    params = init_params(spec, seed, dtype)
    data_rng = np.random.default_rng([seed, 1])
    eval_batch = task.sample(np.random.default_rng([seed, 2]), cfg.eval_size)
    history = []

    def record(step):
        loss, acc = evaluate(spec, params, eval_batch)
        history.append((step, loss, acc, spec.kind, task.name, seed))

    record(0)
    for step in range(1, cfg.steps + 1):
        batch = task.sample(data_rng, cfg.batch)
        out = forward_model(spec, params, batch.tokens, batch.labels, jitter_seed=batch.jitter_seed)
        loss = float(out.loss.value)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became {loss} at step {step}", step)
        grads = backward(out.tape, out.loss)
        lr = cfg.lr
        if cfg.cosine:
            lr = 0.5 * cfg.lr * (1.0 + np.cos(np.pi * (step - 1) / cfg.steps))
        for name in params:
            params[name] = (params[name] - lr * grads[name]).astype(dtype)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            record(step)
    return TrainResult(params, history)


@dataclass(frozen=True)
class GradCheck:
    max_rel_error: float
    probes: int
    resampled: int
    worst: tuple

    def passed(self, tol=1e-5):
        return self.max_rel_error < tol


def _same_state(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(spec, params, batch, probes=200, h=1e-5, seed=0, floor=1e-6, max_tries=None):
    """Central differences against the tape gradient at ``probes`` random entries.

    A probe is redrawn when the +h or -h pass takes a different discrete
    path (permutation map or ReLU mask) from the base pass, since the loss
    is not differentiable across such a switch. Relative error is
    ``|a - f| / max(|a|, |f|, floor)``.
    """
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    def run(p):
        return forward_model(spec, p, batch.tokens, batch.labels, jitter_seed=batch.jitter_seed)

    base = run(params)
    grads = backward(base.tape, base.loss)
    names = sorted(params)
    sizes = np.array([params[n].size for n in names])
    rng = np.random.default_rng(seed)
    max_tries = 20 * probes if max_tries is None else max_tries
    done = resampled = 0
    worst = (0.0, None, None)
    for _ in range(max_tries):
        if done == probes:
            break
        which = names[rng.choice(len(names), p=sizes / sizes.sum())]
        idx = np.unravel_index(rng.integers(params[which].size), params[which].shape)
        vals = []
        stable = True
        for sign in (1.0, -1.0):
            p = dict(params)
            p[which] = params[which].copy()
            p[which][idx] += sign * h
            out = run(p)
            stable &= _same_state(out.tape.discrete, base.tape.discrete)
            vals.append(float(out.loss.value))
        if not stable:
            resampled += 1
            continue
        fd = (vals[0] - vals[1]) / (2 * h)
        an = float(grads[which][idx])
        err = abs(an - fd) / max(abs(an), abs(fd), floor)
        if err > worst[0]:
            worst = (err, which, tuple(int(i) for i in idx))
        done += 1
    if done < probes:
        raise CspError(f"only {done} stable probes in {max_tries} tries")
    return GradCheck(worst[0], done, resampled, worst)
