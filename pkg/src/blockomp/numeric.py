"""Dense linear algebra: least squares, Gram extremes, projections, coherence.

Matrices and vectors are plain ``float64`` numpy arrays. The ``as_matrix`` and
``as_vector`` helpers enforce the shape and finiteness invariants at the API
boundary.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidInput, RankDeficient, ZeroColumn

RANK_TOL = 1e-10
ABS_TOL = 1e-12


def as_matrix(a, allow_empty_cols=False):
    """Validate a 2-D finite real array and return it as ``float64``."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise InvalidInput(f"expected a 2-D matrix, got shape {arr.shape}")
    rows, cols = arr.shape
    if rows < 1 or (cols < 1 and not allow_empty_cols):
        raise InvalidInput(f"matrix must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("matrix entries must be finite")
    return arr


def as_vector(v, allow_empty=False):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise InvalidInput(f"expected a 1-D vector, got shape {arr.shape}")
    if arr.size < 1 and not allow_empty:
        raise InvalidInput("vector must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("vector entries must be finite")
    return arr


@dataclass(frozen=True)
class EigenExtremes:
    """Smallest and largest eigenvalue of a Gram matrix ``A^T A``."""

    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if self.lambda_min > self.lambda_max:
            raise InvalidInput("lambda_min must not exceed lambda_max")

    @property
    def deviation(self):
        """Smallest ``delta`` with ``1 - delta <= lambda_min <= lambda_max <= 1 + delta``."""
        return max(self.lambda_max - 1.0, 1.0 - self.lambda_min)


def _qr(a, rank_tol):
    q, r = np.linalg.qr(a, mode="reduced")
    # R carries the singular values of A.
    sv = np.linalg.svd(r, compute_uv=False)
    if sv.size and (sv[0] == 0.0 or sv[-1] <= rank_tol * sv[0]):
        raise RankDeficient(
            f"matrix of shape {a.shape} is rank deficient "
            f"(sigma_min/sigma_max = {sv[-1] / sv[0] if sv[0] else 0.0:.3e})"
        )
    return q, r


def solve_least_squares(a, y, rank_tol=RANK_TOL):
    """Return ``argmin_z ||y - A z||_2`` via a Householder QR solve.

    ``y`` may be a vector or a matrix of right-hand sides (one per column).

    Raises
    ------
    RankDeficient
        If ``A`` has more columns than rows or its smallest singular value is
        below ``rank_tol`` times the largest.
    """
    a = as_matrix(a)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != a.shape[0]:
        raise InvalidInput(f"right-hand side has {y.shape[0]} rows, matrix has {a.shape[0]}")
    if a.shape[1] > a.shape[0]:
        raise RankDeficient(f"{a.shape[1]} columns exceed {a.shape[0]} rows")
    q, r = _qr(a, rank_tol)
    return solve_triangular(r, q.T @ y)


def gram_extreme_eigenvalues(a):
    """Extreme eigenvalues of ``A^T A``, i.e. the range of ``||Az||^2`` over unit ``z``."""
    a = as_matrix(a)
    return gram_matrix_extremes(a.T @ a)


def gram_matrix_extremes(g):
    w = np.linalg.eigvalsh(g)
    return EigenExtremes(float(w[0]), float(w[-1]))


def project_complement(basis, v, rank_tol=RANK_TOL):
    """Project ``v`` onto the orthogonal complement of ``span(basis)``.

    ``v`` may be a matrix, in which case each column is projected. A basis
    with zero columns spans nothing and ``v`` is returned unchanged.
    """
    basis = as_matrix(basis, allow_empty_cols=True)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != basis.shape[0]:
        raise InvalidInput(f"vector length {v.shape[0]} does not match basis rows {basis.shape[0]}")
    if basis.shape[1] == 0:
        return v.copy()
    return v - basis @ solve_least_squares(basis, v, rank_tol)


def coherence(d, tol=ABS_TOL):
    """Largest absolute normalized inner product between two distinct columns."""
    d = as_matrix(d)
    norms = np.linalg.norm(d, axis=0)
    if np.any(norms < tol):
        raise ZeroColumn(f"column {int(np.argmin(norms))} has norm below {tol}")
    if d.shape[1] < 2:
        return 0.0
    g = np.abs((d / norms).T @ (d / norms))
    np.fill_diagonal(g, 0.0)
    return float(min(g.max(), 1.0))
