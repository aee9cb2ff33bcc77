"""Seeded input generators shared by tests, experiments and the CLI."""

import numpy as np

__all__ = ["tie_free_matrix", "separated_matrix", "gaussian_weights", "orthogonal_weights"]


def tie_free_matrix(rng, n, c):
    """Standard normal entries, redrawn until no column holds a repeated value."""
    while True:
        x = rng.standard_normal((n, c))
        if all(len(np.unique(x[:, j])) == n for j in range(c)):
            return x


def separated_matrix(rng, n, c, spacing=0.5, jitter=0.05):
    """Columns are shuffled grids with at least ``spacing - 2*jitter`` between values.

    Used where an entropic plan must resolve to the hard one at a finite
    temperature, which needs a margin between competing matchings.
    """
    grid = (np.arange(n) - (n - 1) / 2.0) * spacing
    cols = [rng.permutation(grid) + rng.uniform(-jitter, jitter, n) for _ in range(c)]
    return np.stack(cols, axis=1)


def gaussian_weights(rng, c, sigma):
    return rng.normal(0.0, sigma, (c, c))


def orthogonal_weights(rng, c):
    """Haar-random orthogonal matrix (QR of a Gaussian with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((c, c)))
    return q * np.sign(np.diag(r))[None, :]
