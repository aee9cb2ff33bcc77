"""Permutations as index vectors, circular shifts, group sorting and schedules.

A :class:`Permutation` with map ``m`` sends input element ``m[i]`` to output
position ``i``; applying it to ``x`` is ``x[m]`` and its dense matrix has a
one at ``(i, m[i])``.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

__all__ = [
    "Permutation",
    "identity",
    "shift_permutation",
    "reference_sort_permutation",
    "group_sort_permutation",
    "group_sort_maps",
    "compose",
    "to_dense",
    "ShiftSchedule",
    "ResolvedSchedule",
    "DegenerateScheduleWarning",
    "resolve_schedule",
    "integer_root_floor",
]


class Permutation:
    """Immutable bijection on ``{0, ..., n-1}`` stored as an index vector."""

    __slots__ = ("_map",)

    def __init__(self, mapping, check=True):
        m = np.array(mapping, dtype=np.int64).reshape(-1)
        if check:
            n = m.shape[0]
            if n < 1:
                raise ShapeError("permutation must have length >= 1", m.shape)
            seen = np.zeros(n, dtype=bool)
            if m.min() < 0 or m.max() >= n:
                raise ValueError(f"indices out of range for length {n}")
            seen[m] = True
            if not seen.all():
                raise ValueError("mapping is not a bijection")
        m.flags.writeable = False
        self._map = m

    @property
    def map(self):
        return self._map

    def __len__(self):
        return self._map.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return len(self) == len(other) and bool(np.array_equal(self._map, other._map))

    def __hash__(self):
        return hash(self._map.tobytes())

    def __repr__(self):
        return f"Permutation({self._map.tolist()})"

    def apply(self, x):
        """Permute the leading axis of ``x``."""
        x = np.asarray(x)
        if x.shape[0] != len(self):
            raise ShapeError(
                f"cannot apply length-{len(self)} permutation to shape {x.shape}",
                (len(self),),
                x.shape,
            )
        return x[self._map]

    def inverse(self):
        inv = np.empty_like(self._map)
        inv[self._map] = np.arange(len(self))
        return Permutation(inv, check=False)

    def is_identity(self):
        return bool(np.array_equal(self._map, np.arange(len(self))))


def identity(n):
    return Permutation(np.arange(n), check=False)


def shift_permutation(n, j):
    """Circular shift moving the element at position p to (p + j) mod n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if j < 0:
        raise ValueError("shift step must be nonnegative")
    j = j % n
    return Permutation((np.arange(n) - j) % n, check=False)


def _stable_argsort(x, axis=-1):
    return np.argsort(x, axis=axis, kind="stable")


def reference_sort_permutation(reference, values):
    """Monotone rearrangement of ``values`` against ``reference``.

    The r-th smallest value lands where the reference holds its r-th smallest
    entry; ties in either vector keep their original index order.
    """
    reference = np.asarray(reference, dtype=np.float64).reshape(-1)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if reference.shape != values.shape:
        raise ShapeError(
            f"reference length {reference.shape[0]} != values length {values.shape[0]}",
            reference.shape,
            values.shape,
        )
    if reference.shape[0] < 1:
        raise ShapeError("empty vectors", reference.shape)
    m = np.empty(reference.shape[0], dtype=np.int64)
    m[_stable_argsort(reference)] = _stable_argsort(values)
    return Permutation(m, check=False)


def _check_groups(n, k):
    if k < 1 or n % k != 0:
        raise ConfigError(f"group count K={k} does not divide length N={n}", key="groups")
    return n // k


def _pair_maps(reference, values):
    # min-max path for groups of two: swap iff the two pairs are ordered differently
    ref_asc = reference[:, 0] <= reference[:, 1]
    val_asc = values[:, 0] <= values[:, 1]
    swap = ref_asc != val_asc
    base = np.arange(reference.shape[0] * 2).reshape(-1, 2)
    out = base.copy()
    out[swap] = base[swap][:, ::-1]
    return out.reshape(-1)


def group_sort_permutation(reference, values, k, fast_pairs=True):
    """Block-diagonal monotone rearrangement over K contiguous groups."""
    reference = np.asarray(reference, dtype=np.float64).reshape(-1)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if reference.shape != values.shape:
        raise ShapeError(
            f"reference length {reference.shape[0]} != values length {values.shape[0]}",
            reference.shape,
            values.shape,
        )
    n = reference.shape[0]
    g = _check_groups(n, k)
    if g == 2 and fast_pairs:
        return Permutation(
            _pair_maps(reference.reshape(k, 2), values.reshape(k, 2)), check=False
        )
    return Permutation(group_sort_maps(reference, values[:, None], k)[:, 0], check=False)


def group_sort_maps(reference, values, k):
    """Vectorised group sort of every column of ``values`` against ``reference``.

    Returns an ``(N, C)`` integer array whose column c is the map of the
    group-sort permutation for ``values[:, c]``.
    """
    reference = np.asarray(reference, dtype=np.float64).reshape(-1)
    values = np.asarray(values, dtype=np.float64)
    n, c = values.shape
    if reference.shape[0] != n:
        raise ShapeError(
            f"reference length {reference.shape[0]} != {n} rows", reference.shape, values.shape
        )
    g = _check_groups(n, k)
    ref_order = _stable_argsort(reference.reshape(k, g), axis=1)
    val_order = _stable_argsort(values.reshape(k, g, c), axis=1)
    maps = np.empty((k, g, c), dtype=np.int64)
    idx = np.broadcast_to(ref_order[:, :, None], (k, g, c))
    np.put_along_axis(maps, idx, val_order, axis=1)
    maps += (np.arange(k) * g)[:, None, None]
    return maps.reshape(n, c)


def compose(outer, inner):
    """Permutation equal to applying ``inner`` first and then ``outer``."""
    if len(outer) != len(inner):
        raise ShapeError(
            f"cannot compose lengths {len(outer)} and {len(inner)}",
            (len(outer),),
            (len(inner),),
        )
    return Permutation(inner.map[outer.map], check=False)


def to_dense(p):
    n = len(p)
    d = np.zeros((n, n))
    d[np.arange(n), p.map] = 1.0
    return d


class DegenerateScheduleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ShiftSchedule:
    """Per-channel circular-shift steps.

    ``kind`` is ``"linear"``, ``"power"`` or ``"explicit"``. Power-law
    schedules span all ``layer_count * C`` channels of a model; layer
    ``layer_index`` owns the contiguous global indices
    ``[layer_index*C, (layer_index+1)*C)``.
    """

    kind: str = "linear"
    steps: tuple = ()
    base: int | None = None
    layer_index: int = 0
    layer_count: int = 1

    def __post_init__(self):
        if self.kind not in ("linear", "power", "explicit"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}", key="schedule")
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        if any(s < 0 for s in self.steps):
            raise ConfigError("shift steps must be nonnegative", key="steps")
        if self.base is not None and self.base < 1:
            raise ConfigError("power-law base must be >= 1", key="base")
        if not 0 <= self.layer_index < max(self.layer_count, 1):
            raise ConfigError("layer_index out of range", key="layer_index")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def power(cls, layer_index=0, layer_count=1, base=None):
        return cls("power", base=base, layer_index=layer_index, layer_count=layer_count)

    @classmethod
    def explicit(cls, steps):
        return cls("explicit", steps=tuple(steps))


@dataclass(frozen=True)
class ResolvedSchedule:
    steps: np.ndarray
    base: int | None = None
    degenerate: bool = False
    notes: tuple = field(default_factory=tuple)


def integer_root_floor(n, k):
    """Largest integer r with r**k <= n (exact, no float rounding)."""
    if k < 1:
        raise ValueError("root degree must be >= 1")
    r = int(round(n ** (1.0 / k)))
    while r > 1 and r**k > n:
        r -= 1
    while (r + 1) ** k <= n:
        r += 1
    return max(r, 1)


def resolve_schedule(schedule, n, c):
    """Concrete per-channel steps, reduced modulo ``n``; channel 0 gets 0."""
    if n < 1 or c < 1:
        raise ValueError("n and c must be >= 1")
    if schedule.kind == "linear":
        stride = math.ceil(n / c)
        steps = np.array([(i * stride) % n for i in range(c)], dtype=np.int64)
        return ResolvedSchedule(steps)
    if schedule.kind == "explicit":
        if len(schedule.steps) != c:
            raise ConfigError(
                f"explicit schedule has {len(schedule.steps)} steps for {c} channels",
                key="steps",
            )
        steps = np.array([s % n for s in schedule.steps], dtype=np.int64)
        if steps[0] != 0:
            raise ConfigError("the reference channel must have step 0", key="steps")
        return ResolvedSchedule(steps)
    total = schedule.layer_count * c
    if total < 2:
        raise ConfigError("power-law schedule needs L*C >= 2", key="schedule")
    base = schedule.base if schedule.base is not None else integer_root_floor(n, total - 1)
    offset = schedule.layer_index * c
    steps = np.array([(pow(base, offset + i, n) - 1) % n for i in range(c)], dtype=np.int64)
    # the reference channel is never shifted, whatever its global index
    steps[0] = 0
    degenerate = base == 1
    if degenerate:
        warnings.warn(
            f"power-law base resolved to 1 for N={n}, L*C={total}; every step is 0",
            DegenerateScheduleWarning,
            stacklevel=2,
        )
    return ResolvedSchedule(steps, base=base, degenerate=degenerate)
