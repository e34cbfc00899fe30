"""Small dense linear-algebra kernels.

Matrices and vectors are plain ``numpy.ndarray`` objects (float64). The
helpers here add the dimension checks and the deterministic power iteration
the solvers rely on.
"""
from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes do not agree."""


@dataclass(frozen=True)
class SpectralNorm:
    value: float
    converged: bool
    iterations: int

    def __float__(self):
        return self.value


def _as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {M.shape}")
    return M


def matvec(M, x):
    """Return ``M @ x`` after checking that ``M.cols == len(x)``."""
    M = _as_matrix(M)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or M.shape[1] != x.shape[0]:
        raise DimensionError(
            f"matvec: matrix has {M.shape[1]} columns, vector has shape {x.shape}"
        )
    return M @ x


def column_norms(M):
    """Euclidean norm of every column of ``M``.

    Rows are accumulated sequentially (row 0, row 1, ...), so the result is
    bit-reproducible for a given input.
    """
    M = _as_matrix(M)
    acc = np.zeros(M.shape[1])
    for row in M:
        acc += row * row
    return np.sqrt(acc)


def spectral_norm(M, tol=1e-10, max_iter=1000):
    """Largest singular value of ``M`` by power iteration on ``M.T @ M``.

    The start vector is the normalized all-ones vector. If it happens to be
    orthogonal to the dominant eigenvector (Rayleigh quotient stays at zero
    while ``M`` is nonzero) the first coordinate is nudged by ``1e-8``.

    Parameters
    ----------
    M : array_like, shape (m, n)
    tol : float
        Relative change in the eigenvalue estimate used as stopping rule.
    max_iter : int

    Returns
    -------
    SpectralNorm
        ``value`` is the estimate of sigma_max; ``converged`` is False when
        ``max_iter`` was exhausted (the best estimate is still returned).
    """
    M = _as_matrix(M)
    if M.size == 0:
        raise DimensionError("spectral_norm of an empty matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    G = M.T @ M
    n = G.shape[0]
    x = np.ones(n) / np.sqrt(n)
    lam = float(x @ G @ x)
    if lam == 0.0 and np.any(G):
        x[0] += 1e-8
        x /= np.linalg.norm(x)
        lam = float(x @ G @ x)
    if not np.any(G):
        return SpectralNorm(0.0, True, 0)
    for it in range(1, max_iter + 1):
        y = G @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return SpectralNorm(0.0, True, it)
        x = y / ny
        lam_new = float(x @ G @ x)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return SpectralNorm(float(np.sqrt(max(lam_new, 0.0))), True, it)
        lam = lam_new
    return SpectralNorm(float(np.sqrt(max(lam, 0.0))), False, max_iter)


def augmented_spectral_norm_sq(W, tol=1e-10, max_iter=1000):
    """``||[-W  I]||^2`` computed as ``1 + sigma_max(W)^2``."""
    s = spectral_norm(W, tol=tol, max_iter=max_iter).value
    return 1.0 + s * s
