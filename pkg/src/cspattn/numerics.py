"""Dense matrix helpers, matrix norms, rank-1 residuals and a Jacobi SVD.

Matrices are plain 2-D ``numpy.ndarray`` objects in float64. The functions
here are the measuring instruments used by the rank-collapse experiments,
so they favour exactness and determinism over speed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ShapeError

__all__ = [
    "as_matrix",
    "matmul",
    "norm1",
    "norm_inf",
    "norm_1inf",
    "midpoint_median",
    "ResidualReport",
    "residual",
    "residual_with",
    "singular_spectrum",
    "frobenius_sq",
]


def as_matrix(x, name="x"):
    """Return ``x`` as a finite float64 2-D array, raising on bad input."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}", a.shape)
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must be non-empty, got shape {a.shape}", a.shape)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def matmul(a, b):
    """Matrix product with a fixed accumulation order.

    Terms are accumulated left to right over the inner index, exactly like a
    scalar triple loop, so the result does not depend on the BLAS build.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape} by {b.shape}", a.shape, b.shape
        )
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out = out + a[:, k : k + 1] * b[k : k + 1, :]
    return out


def norm1(x):
    """Maximum absolute column sum."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.abs(x).sum(axis=0).max())


def norm_inf(x):
    """Maximum absolute row sum."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.abs(x).sum(axis=1).max())


def norm_1inf(x):
    return float(np.sqrt(norm1(x) * norm_inf(x)))


def midpoint_median(x, axis=0):
    """Median taking the midpoint of the two central values for even lengths.

    Any point between the central values minimises the 1-norm objective;
    the midpoint is the one that commutes with negation, so
    ``midpoint_median(-x) == -midpoint_median(x)`` exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    s = np.sort(x, axis=axis)
    return 0.5 * (s.take((n - 1) // 2, axis=axis) + s.take(n // 2, axis=axis))


@dataclass(frozen=True)
class ResidualReport:
    """Rank-1 residual ``X - 1 xhat^T`` together with its norms."""

    xhat: np.ndarray
    residual: np.ndarray
    norm1: float
    norm_inf: float
    norm_1inf: float


def residual_with(x, xhat):
    """Residual report for an arbitrary candidate row ``xhat``."""
    x = as_matrix(x)
    xhat = np.asarray(xhat, dtype=np.float64).reshape(-1)
    if xhat.shape[0] != x.shape[1]:
        raise ShapeError(
            f"candidate of length {xhat.shape[0]} for {x.shape} matrix",
            x.shape,
            xhat.shape,
        )
    eps = x - xhat[None, :]
    n1 = norm1(eps)
    ninf = norm_inf(eps)
    return ResidualReport(
        xhat=xhat,
        residual=eps,
        norm1=n1,
        norm_inf=ninf,
        norm_1inf=float(np.sqrt(n1 * ninf)),
    )


def residual(x):
    """Rank-1 residual with ``xhat`` = per-column midpoint median.

    The median minimises every column's absolute deviation independently, so
    it is an exact minimiser of ``norm1(X - 1 x^T)``.
    """
    x = as_matrix(x)
    return residual_with(x, midpoint_median(x, axis=0))


def frobenius_sq(x):
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * x))


def singular_spectrum(x, tol=1e-10, max_sweeps=100):
    """Singular values by one-sided (Hestenes) Jacobi, sorted nonincreasing.

    Column pairs are rotated until every pair is orthogonal to relative
    tolerance ``tol``. Raises ConvergenceError after ``max_sweeps`` sweeps.
    """
    a = as_matrix(x).copy()
    if a.shape[1] > a.shape[0]:
        a = a.T.copy()
    n_cols = a.shape[1]
    # work on columns as rows of a C-contiguous array
    cols = np.ascontiguousarray(a.T)
    # columns this small relative to the whole matrix count as exact zeros
    negligible = (1e-15**2) * frobenius_sq(a)
    off = 0.0
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n_cols - 1):
            for q in range(p + 1, n_cols):
                ap = cols[p]
                aq = cols[q]
                alpha = float(ap @ ap)
                beta = float(aq @ aq)
                gamma = float(ap @ aq)
                if alpha <= negligible or beta <= negligible:
                    continue
                rel = abs(gamma) / (np.sqrt(alpha) * np.sqrt(beta))
                off = max(off, rel)
                if rel <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * ap - s * aq
                new_q = s * ap + c * aq
                cols[p] = new_p
                cols[q] = new_q
        if off <= tol:
            sv = np.sqrt(np.einsum("ij,ij->i", cols, cols))
            return np.sort(sv)[::-1].copy()
    raise ConvergenceError(
        f"Jacobi SVD did not converge in {max_sweeps} sweeps "
        f"(max relative off-diagonal {off:.3e})",
        off,
    )
