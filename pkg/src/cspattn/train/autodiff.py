"""A small tape-based reverse-mode autodiff engine over numpy arrays.

Every op appends a node holding its input ids and a closure that maps the
output gradient to input gradients. ``backward`` walks the tape in reverse.
Only the ops the toy models need are provided.
"""

import numpy as np

from ..errors import CspError

__all__ = ["Tape", "Var", "BackwardError", "backward"]


class BackwardError(CspError, RuntimeError):
    pass


class Var:
    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape.values[self.idx]

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Append-only record of one forward pass.

    ``discrete`` collects the piecewise-constant decisions taken during the
    pass (permutation index maps, ReLU masks); two passes with equal
    discrete state lie on the same smooth piece of the loss.
    """

    def __init__(self):
        self.values = []
        self.nodes = []
        self.params = {}
        self.grads = {}
        self.discrete = []

    def _push(self, value, inputs=(), rule=None):
        idx = len(self.values)
        self.values.append(value)
        self.nodes.append((tuple(v.idx for v in inputs), rule))
        return Var(self, idx)

    def constant(self, value):
        return self._push(np.asarray(value))

    def param(self, name, value):
        """Register a trainable leaf; its gradient lands in ``grads[name]``."""
        if name in self.params:
            return self.params[name]
        v = self._push(value)
        self.params[name] = v
        return v

    def _lift(self, x):
        return x if isinstance(x, Var) else self.constant(x)

    # ops

    def add(self, a, b):
        a, b = self._lift(a), self._lift(b)
        sa, sb = a.shape, b.shape
        return self._push(
            a.value + b.value,
            (a, b),
            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        )

    def scale(self, a, factor):
        return self._push(a.value * factor, (a,), lambda g: (g * factor,))

    def matmul(self, a, b):
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value

        def rule(g):
            ga = g @ np.swapaxes(bv, -1, -2)
            gb = np.swapaxes(av, -1, -2) @ g
            return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

        return self._push(av @ bv, (a, b), rule)

    def transpose(self, a):
        return self._push(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))

    def relu(self, a):
        mask = a.value > 0
        self.discrete.append(mask)
        return self._push(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))

    def softmax(self, a):
        z = a.value - a.value.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=-1, keepdims=True)
        return self._push(s, (a,), lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))

    def embed(self, table, tokens):
        tokens = np.asarray(tokens)
        shape = table.shape

        def rule(g):
            out = np.zeros(shape, dtype=g.dtype)
            np.add.at(out, tokens, g)
            return (out,)

        return self._push(table.value[tokens], (table,), rule)

    def permute_rows(self, a, maps):
        """Gather along axis -2: ``out[..., i, c] = a[..., maps[..., i, c], c]``.

        ``maps`` is treated as a constant of the pass, so the gradient is
        scattered back through the inverse permutation.
        """
        maps = np.asarray(maps)
        self.discrete.append(maps)
        inv = np.empty_like(maps)
        pos = np.broadcast_to(np.arange(maps.shape[-2])[:, None], maps.shape)
        np.put_along_axis(inv, maps, pos, axis=-2)
        return self._push(
            np.take_along_axis(a.value, maps, axis=-2),
            (a,),
            lambda g: (np.take_along_axis(g, inv, axis=-2),),
        )

    def columns(self, a, start, stop):
        shape = a.shape

        def rule(g):
            out = np.zeros(shape, dtype=g.dtype)
            out[..., start:stop] = g
            return (out,)

        return self._push(a.value[..., start:stop], (a,), rule)

    def concat(self, parts):
        widths = np.cumsum([0] + [p.shape[-1] for p in parts])
        return self._push(
            np.concatenate([p.value for p in parts], axis=-1),
            tuple(parts),
            lambda g: tuple(g[..., widths[i] : widths[i + 1]] for i in range(len(parts))),
        )

    def mean(self, a, axis):
        shape = a.shape
        n = shape[axis]
        return self._push(
            a.value.mean(axis=axis),
            (a,),
            lambda g: (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),),
        )

    def row(self, a, index):
        """``a[:, index, :]`` for a batch of sequences."""
        shape = a.shape

        def rule(g):
            out = np.zeros(shape, dtype=g.dtype)
            out[:, index, :] = g
            return (out,)

        return self._push(a.value[:, index, :], (a,), rule)

    def sum(self, a):
        shape = a.shape
        return self._push(np.asarray(a.value.sum()), (a,), lambda g: (np.full(shape, g, dtype=a.value.dtype),))

    def cross_entropy(self, logits, labels):
        """Mean softmax cross-entropy of ``logits`` (B x classes)."""
        labels = np.asarray(labels)
        z = logits.value - logits.value.max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        b = labels.shape[0]
        loss = -logp[np.arange(b), labels].mean()

        def rule(g):
            p = np.exp(logp)
            p[np.arange(b), labels] -= 1.0
            return (p * (g / b),)

        return self._push(np.asarray(loss), (logits,), rule)


def backward(tape, output, seed=None):
    """Accumulate d(output)/d(param) for every registered parameter.

    ``seed`` is the gradient of the final objective with respect to
    ``output`` (default: ones). Returns ``tape.grads``.
    """
    if not tape.nodes:
        raise BackwardError("backward called on an empty tape; run a forward pass first")
    if output.tape is not tape:
        raise BackwardError("output was recorded on a different tape")
    grads = [None] * len(tape.values)
    grads[output.idx] = np.ones_like(output.value) if seed is None else np.asarray(seed, dtype=output.value.dtype)
    for idx in range(output.idx, -1, -1):
        g = grads[idx]
        inputs, rule = tape.nodes[idx]
        if g is None or rule is None:
            continue
        for inp, gi in zip(inputs, rule(g)):
            grads[inp] = gi if grads[inp] is None else grads[inp] + gi
    tape.grads = {
        name: (grads[v.idx] if grads[v.idx] is not None else np.zeros_like(v.value))
        for name, v in tape.params.items()
    }
    return tape.grads
