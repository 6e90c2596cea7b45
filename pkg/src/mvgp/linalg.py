"""Dense linear-algebra helpers shared by every model in the package.

All factorizations go through :func:`jitter_cholesky`, which applies one
escalation policy: try the plain factorization, then add
``eps * mean(diag(A)) * I`` for ``eps`` in ``1e-10, 1e-9, ..., 1e-6``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

JITTER_START = 1e-10
JITTER_MAX = 1e-6
SYMMETRY_RTOL = 1e-12


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization failed even after the maximum jitter."""


class DegenerateCovarianceError(NotPositiveDefiniteError):
    """A covariance needed jitter where a strictly positive definite one is required."""


class Factor(NamedTuple):
    """Lower Cholesky factor together with the absolute jitter that was added."""

    lower: np.ndarray
    jitter: float

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``(A + jitter I) x = b``."""
        return sla.cho_solve((self.lower, True), b, check_finite=False)

    def solve_lower(self, b: np.ndarray) -> np.ndarray:
        """Solve ``L x = b``."""
        return sla.solve_triangular(self.lower, b, lower=True, check_finite=False)


def check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    bound = SYMMETRY_RTOL * np.maximum(1.0, np.abs(a))
    if np.any(np.abs(a - a.T) > bound):
        raise ValueError(f"{name} is not symmetric")
    return a


def jitter_cholesky(a: np.ndarray) -> Factor:
    """Lower Cholesky factor of a symmetric PSD matrix under the jitter policy.

    Raises
    ------
    NotPositiveDefiniteError
        If the factorization fails at the largest jitter level.
    """
    a = np.asarray(a, dtype=float)
    try:
        return Factor(np.linalg.cholesky(a), 0.0)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(a)))
    if not scale > 0.0:
        raise NotPositiveDefiniteError("matrix has non-positive mean diagonal")
    eye = np.eye(a.shape[0])
    eps = JITTER_START
    while eps <= JITTER_MAX * (1 + 1e-9):
        jitter = eps * scale
        try:
            return Factor(np.linalg.cholesky(a + jitter * eye), jitter)
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise NotPositiveDefiniteError(
        f"matrix is not positive semi-definite (Cholesky failed with jitter {JITTER_MAX:g}*mean(diag))"
    )


def is_psd(a: np.ndarray) -> bool:
    """True when ``a`` is symmetric and factorizable under the jitter policy."""
    try:
        jitter_cholesky(check_symmetric(a))
    except (ValueError, NotPositiveDefiniteError):
        return False
    return True


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v).reshape((rows, cols), order="F")


def mvn_log_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Log density of a multivariate normal evaluated through a Cholesky factor."""
    factor = jitter_cholesky(check_symmetric(cov, "cov"))
    if factor.jitter > 0.0:
        raise DegenerateCovarianceError("covariance is singular; density is undefined")
    r = factor.solve_lower(np.asarray(x, dtype=float) - np.asarray(mean, dtype=float))
    k = r.shape[0]
    return float(-0.5 * k * np.log(2 * np.pi) - 0.5 * factor.log_det - 0.5 * r @ r)
