"""Dense float64 matrix kernel: validated products and an SVD pseudoinverse.

Matrices are plain 2-D C-contiguous float64 ndarrays. ``as_matrix`` is the
validating constructor; everything downstream assumes its invariants
(2-D shape, finite entries).
"""

from __future__ import annotations

import numpy as np

Matrix = np.ndarray


def as_matrix(data) -> Matrix:
    """Coerce to a 2-D float64 array, rejecting NaN/Inf entries."""
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite (no NaN/Inf)")
    return a


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit conformability check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    return a @ b


def pinv(a: Matrix, tol: float = 1e-12) -> Matrix:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values <= ``tol`` times the largest singular value are treated
    as zero; the rest are inverted. The result satisfies the four Penrose
    conditions to numerical accuracy, including for rank-deficient input.
    """
    a = as_matrix(a)
    if a.size == 0:
        raise ValueError("pinv: empty matrix")
    if tol < 0:
        raise ValueError(f"pinv: tol must be >= 0, got {tol}")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"pinv: SVD did not converge: {exc}") from exc
    cutoff = tol * s[0] if s.size else 0.0
    inv_s = np.where(s > cutoff, np.divide(1.0, s, out=np.zeros_like(s), where=s > 0), 0.0)
    return (vt.T * inv_s) @ u.T
