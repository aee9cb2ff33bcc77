"""Synthetic sequence-classification tasks with balanced labels."""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

__all__ = ["Batch", "SyntheticTask", "TASKS"]

TASKS = ("majority", "sorted", "match")


@dataclass(frozen=True)
class Batch:
    tokens: np.ndarray
    labels: np.ndarray
    jitter_seed: int


@dataclass(frozen=True)
class SyntheticTask:
    """``majority``: label is the token holding a strict majority (classes = vocab).
    ``sorted``: label 1 iff the sequence is non-decreasing.
    ``match``: label 1 iff the first and last tokens agree.

    Labels are dealt round-robin before shuffling, so every batch is
    balanced to within one example per class.
    """

    name: str
    seq_len: int
    vocab: int = 2

    def __post_init__(self):
        if self.name not in TASKS:
            raise ConfigError(f"unknown task {self.name!r}; expected one of {TASKS}", key="task")
        if self.vocab < 2 or self.seq_len < 2:
            raise ConfigError("tasks need vocab >= 2 and seq_len >= 2", key="vocab")

    @property
    def classes(self):
        return self.vocab if self.name == "majority" else 2

    def sample(self, rng, batch):
        labels = np.arange(batch) % self.classes
        rng.shuffle(labels)
        tokens = np.stack([getattr(self, "_" + self.name)(rng, int(y)) for y in labels])
        return Batch(tokens, labels, int(rng.integers(2**63)))

    def _majority(self, rng, y):
        n = self.seq_len
        count = int(rng.integers(n // 2 + 1, n + 1))
        others = np.array([t for t in range(self.vocab) if t != y])
        seq = rng.choice(others, n)
        seq[rng.permutation(n)[:count]] = y
        return seq

    def _sorted(self, rng, y):
        while True:
            seq = rng.integers(0, self.vocab, self.seq_len)
            if y:
                return np.sort(seq)
            if np.any(np.diff(seq) < 0):
                return seq

    def _match(self, rng, y):
        seq = rng.integers(0, self.vocab, self.seq_len)
        if y:
            seq[-1] = seq[0]
        else:
            seq[-1] = (seq[0] + rng.integers(1, self.vocab)) % self.vocab
        return seq
