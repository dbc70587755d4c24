"""Condition numbers, jitter lower bounds and a rank-aware Cholesky."""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import lapack

from .errors import InputError, SingularMatrixError

__all__ = [
    "condition_number",
    "jitter_bound",
    "conditioning_jitter",
    "cholesky",
    "extreme_eigenvalues",
    "PIVOT_TOL",
]

# A pivot below PIVOT_TOL * n * eps * max(diag) is treated as zero.
PIVOT_TOL = 100.0


def _check_symmetric(R):
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InputError(f"expected a square matrix, got shape {R.shape}")
    scale = np.max(np.abs(R)) if R.size else 0.0
    if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * max(scale, 1.0)):
        raise InputError("matrix is not symmetric")
    return R


def extreme_eigenvalues(R) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    R = _check_symmetric(R)
    w = np.linalg.eigvalsh(R)
    return float(w[0]), float(w[-1])


def condition_number(R) -> float:
    """Spectral condition number ``lambda_max / lambda_min`` of a symmetric PSD matrix.

    Returns ``inf`` when the smallest eigenvalue is not resolvable from zero
    at machine precision, i.e. ``lambda_min <= eps * lambda_max``.
    """
    lo, hi = extreme_eigenvalues(R)
    if hi <= 0 or lo <= np.finfo(float).eps * hi:
        return math.inf
    return hi / lo


def jitter_bound(lambda_max: float, kappa: float, a: float) -> float:
    """Smallest diagonal shift that brings the condition number down to ``exp(a)``.

    Adding ``delta = lambda_max (kappa - e^a) / (kappa (e^a - 1))`` to every
    eigenvalue of a matrix with condition number ``kappa`` and top
    eigenvalue ``lambda_max`` gives condition number exactly ``e^a``.  The
    result is clamped at zero when the matrix is already conditioned well
    enough.  ``kappa = inf`` (singular matrix) is handled as the limit
    ``lambda_max / (e^a - 1)``.
    """
    if not a > 0:
        raise InputError(f"conditioning target a must be positive, got {a}")
    if not lambda_max > 0:
        raise InputError(f"lambda_max must be positive, got {lambda_max}")
    if not kappa >= 1:
        raise InputError(f"condition number must be >= 1, got {kappa}")
    ea = math.exp(a)
    if math.isinf(kappa):
        return lambda_max / math.expm1(a)
    return max(0.0, lambda_max * (kappa - ea) / (kappa * math.expm1(a)))


def conditioning_jitter(R, a: float) -> float:
    """Diagonal shift bringing the condition number of ``R`` down to ``exp(a)``.

    Zero when ``R`` already meets the target.  A smallest eigenvalue that
    roundoff pushed below zero is lifted as well, so the shifted spectrum
    satisfies the bound exactly in exact arithmetic.
    """
    if not a > 0:
        raise InputError(f"conditioning target a must be positive, got {a}")
    lo, hi = extreme_eigenvalues(R)
    if not hi > 0:
        raise InputError("matrix has no positive eigenvalue")
    kappa = math.inf if lo <= np.finfo(float).eps * hi else hi / lo
    target = math.exp(a)
    if kappa <= target:
        return 0.0
    delta = jitter_bound(hi, kappa, a)
    if lo < 0.0:
        delta += target * (-lo) / math.expm1(a)
    return delta


def cholesky(R, check_rank: bool = True) -> np.ndarray:
    """Lower Cholesky factor of ``R``.

    Raises :class:`SingularMatrixError` naming the first failing leading
    minor.  With ``check_rank`` a factorization whose pivot falls below
    ``PIVOT_TOL * n * eps`` relative to the largest diagonal entry is also
    rejected: LAPACK routinely "succeeds" on exactly rank-deficient PSD
    matrices with pivots at roundoff level.
    """
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    L, info = lapack.dpotrf(R, lower=1, clean=1)
    if info > 0:
        raise SingularMatrixError(int(info))
    if info < 0:
        raise InputError("invalid matrix passed to Cholesky")
    if check_rank and n:
        piv = np.diag(L) ** 2
        tol = PIVOT_TOL * n * np.finfo(float).eps * np.max(np.diag(R))
        bad = np.flatnonzero(piv <= tol)
        if bad.size:
            raise SingularMatrixError(int(bad[0]) + 1)
    return L
