"""Brute-force 1-D optimal transport and the sorting equivalence check.

For two length-G vectors the transport plans between uniform measures are
the G x G permutation matrices. Enumerating them all gives an oracle that is
independent of the sorting path in :mod:`cspattn.permutation`.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError
from .permutation import Permutation, reference_sort_permutation

MAX_GROUP = 8
UNIQUE_RTOL = 1e-12

__all__ = [
    "OtProblem",
    "OtSolution",
    "brute_force_ot",
    "plan_cost",
    "equivalence_check",
    "EquivalenceRecord",
    "random_tie_free",
    "run_equivalence_suite",
]


@dataclass(frozen=True)
class OtProblem:
    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.source, dtype=np.float64).reshape(-1)
        t = np.asarray(self.target, dtype=np.float64).reshape(-1)
        if s.shape != t.shape or s.shape[0] < 1:
            raise ShapeError(f"source {s.shape} and target {t.shape} differ", s.shape, t.shape)
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "target", t)

    @property
    def size(self):
        return self.source.shape[0]

    @property
    def cost_matrix(self):
        """Squared distances ``D[i, j] = (source[i] - target[j])**2``."""
        return (self.source[:, None] - self.target[None, :]) ** 2

    @property
    def inner_cost_matrix(self):
        """``-source target^T``; same argmin over permutations as ``cost_matrix``."""
        return -np.outer(self.source, self.target)

    @property
    def constant(self):
        return float(self.source @ self.source + self.target @ self.target)


@dataclass(frozen=True)
class OtSolution:
    plan: Permutation
    cost: float
    unique: bool


@lru_cache(maxsize=MAX_GROUP)
def _all_permutations(g):
    return np.array(list(itertools.permutations(range(g))), dtype=np.int64)


def plan_cost(cost, plan):
    """``<cost, T>`` for the permutation matrix of ``plan``."""
    m = plan.map
    return float(cost[np.arange(len(m)), m].sum())


def _enumerate(cost):
    g = cost.shape[0]
    perms = _all_permutations(g)
    costs = cost[np.arange(g)[None, :], perms].sum(axis=1)
    order = np.argsort(costs, kind="stable")
    best = costs[order[0]]
    if len(order) == 1:
        unique = True
    else:
        unique = bool(costs[order[1]] - best > UNIQUE_RTOL * (1.0 + abs(best)))
    return OtSolution(Permutation(perms[order[0]], check=False), float(best), unique)


def brute_force_ot(problem, objective="squared"):
    """Exhaustive minimiser of ``<D, T>`` (``objective="inner"``: ``<-s t^T, T>``)."""
    if problem.size > MAX_GROUP:
        raise ConfigError(
            f"brute force limited to G <= {MAX_GROUP} (got {problem.size}); "
            "use reference_sort_permutation for larger groups",
            key="gmax",
        )
    if objective == "squared":
        return _enumerate(problem.cost_matrix)
    if objective == "inner":
        return _enumerate(problem.inner_cost_matrix)
    raise ValueError(f"unknown objective {objective!r}")


@dataclass(frozen=True)
class EquivalenceRecord:
    size: int
    unique: bool
    agree: bool
    optimal_cost: float
    sorting_cost: float


def _check(problem):
    by_distance = brute_force_ot(problem, "squared")
    by_inner = brute_force_ot(problem, "inner")
    by_sort = reference_sort_permutation(problem.source, problem.target)
    sort_cost = plan_cost(problem.cost_matrix, by_sort)
    if by_distance.unique:
        agree = by_distance.plan == by_inner.plan == by_sort
    else:
        agree = sort_cost <= by_distance.cost + UNIQUE_RTOL * (1.0 + abs(by_distance.cost))
    return EquivalenceRecord(problem.size, by_distance.unique, bool(agree), by_distance.cost, sort_cost)


def equivalence_check(problem):
    """True when enumeration (both cost forms) and sorting give the same plan.

    Without a unique optimum only the optimality of the sorting plan's cost
    is required.
    """
    return _check(problem).agree


def random_tie_free(rng, g):
    """Random instance whose source and target entries are pairwise distinct."""
    while True:
        s = rng.standard_normal(g)
        t = rng.standard_normal(g)
        if len(np.unique(s)) == g and len(np.unique(t)) == g:
            return OtProblem(s, t)


def run_equivalence_suite(trials, gmin=2, gmax=6, seed=0):
    """Check ``trials`` random tie-free instances with G drawn from [gmin, gmax]."""
    if not 1 <= gmin <= gmax <= MAX_GROUP:
        raise ConfigError(f"need 1 <= gmin <= gmax <= {MAX_GROUP}", key="gmax")
    rng = np.random.default_rng(seed)
    records = []
    for _ in range(trials):
        g = int(rng.integers(gmin, gmax + 1))
        records.append(_check(random_tie_free(rng, g)))
    return records
