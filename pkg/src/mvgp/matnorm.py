"""Matrix-variate normal distribution.

``X ~ MN(M, Sigma, Lambda)`` with ``M`` of shape ``(n, d)``, among-row
covariance ``Sigma`` (``n x n``) and among-column covariance ``Lambda``
(``d x d``). Under column stacking ``vec(X) ~ N(vec(M), Lambda kron Sigma)``
and, equivalently, ``vec(X.T) ~ N(vec(M.T), Sigma kron Lambda)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from . import rng
from .linalg import (
    DegenerateCovarianceError,
    Factor,
    check_symmetric,
    jitter_cholesky,
    symmetrize,
    vec,
)


class Axis(str, Enum):
    ROWS = "rows"
    COLS = "cols"


class Block(str, Enum):
    FIRST = "first"
    SECOND = "second"


@dataclass(frozen=True)
class AxisPartition:
    """Split of one axis into a leading block of ``first_block_size`` and the rest."""

    axis: Axis
    first_block_size: int

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        if int(self.first_block_size) != self.first_block_size or self.first_block_size < 1:
            raise ValueError("first_block_size must be a positive integer")

    def validate(self, length: int) -> None:
        if not 1 <= self.first_block_size < length:
            raise ValueError(
                f"first_block_size={self.first_block_size} must lie in [1, {length - 1}] "
                f"for an axis of length {length}"
            )


@dataclass(frozen=True)
class MultivariateNormalSpec:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = check_symmetric(self.cov, "cov")
        if cov.shape[0] != mean.shape[0]:
            raise ValueError("mean and cov dimensions differ")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class MatrixNormal:
    """Matrix-variate normal law ``MN(mean, row_cov, col_cov)``.

    Parameters
    ----------
    mean : array_like, shape (n, d)
    row_cov : array_like, shape (n, n)
        Symmetric positive semi-definite among-row covariance.
    col_cov : array_like, shape (d, d)
        Symmetric positive semi-definite among-column covariance.

    Both covariances are checked for symmetry and factorized (with jitter
    if needed) at construction; the factors are cached.
    """

    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        row_cov = check_symmetric(self.row_cov, "row_cov")
        col_cov = check_symmetric(self.col_cov, "col_cov")
        n, d = mean.shape
        if row_cov.shape != (n, n):
            raise ValueError(f"row_cov must be {n}x{n} for a {n}x{d} mean, got {row_cov.shape}")
        if col_cov.shape != (d, d):
            raise ValueError(f"col_cov must be {d}x{d} for a {n}x{d} mean, got {col_cov.shape}")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean contains non-finite entries")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "row_cov", row_cov)
        object.__setattr__(self, "col_cov", col_cov)
        # validates positive semi-definiteness
        self.row_factor
        self.col_factor

    @property
    def shape(self) -> tuple[int, int]:
        return self.mean.shape

    @cached_property
    def row_factor(self) -> Factor:
        return jitter_cholesky(self.row_cov)

    @cached_property
    def col_factor(self) -> Factor:
        return jitter_cholesky(self.col_cov)

    def log_density(self, x, allow_jitter: bool = False) -> float:
        return log_density(self, x, allow_jitter=allow_jitter)

    def sample(self, count: int, seed: int) -> np.ndarray:
        return sample(self, count, seed)


def log_density(mn: MatrixNormal, x, allow_jitter: bool = False) -> float:
    """Log density of ``x`` under ``mn``.

    Evaluated as ``-(nd/2) ln 2pi - (d/2) ln|Sigma| - (n/2) ln|Lambda|
    - 1/2 tr(Lambda^-1 (X-M)^T Sigma^-1 (X-M))``.

    Parameters
    ----------
    allow_jitter : bool
        If False (default), a covariance that could only be factorized with
        jitter is rejected with :class:`DegenerateCovarianceError`; the
        density does not exist on a degenerate support. If True the
        jittered factors are used.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape != mn.shape:
        raise ValueError(f"x has shape {x.shape}, expected {mn.shape}")
    rf, cf = mn.row_factor, mn.col_factor
    if not allow_jitter and (rf.jitter > 0.0 or cf.jitter > 0.0):
        raise DegenerateCovarianceError("covariance is singular; density is undefined")
    n, d = mn.shape
    # A = L_row^-1 (X - M) L_col^-T ; quadratic form is ||A||_F^2
    a = rf.solve_lower(x - mn.mean)
    a = cf.solve_lower(a.T)
    quad = float(np.sum(a * a))
    return -0.5 * (n * d * np.log(2 * np.pi) + d * rf.log_det + n * cf.log_det + quad)


def vec_distribution(mn: MatrixNormal) -> MultivariateNormalSpec:
    """Law of the column-stacked ``vec(X)``: ``N(vec(M), Lambda kron Sigma)``."""
    return MultivariateNormalSpec(vec(mn.mean), np.kron(mn.col_cov, mn.row_cov))


def vec_transpose_distribution(mn: MatrixNormal) -> MultivariateNormalSpec:
    """Law of ``vec(X.T)`` (rows stacked): ``N(vec(M.T), Sigma kron Lambda)``."""
    return MultivariateNormalSpec(vec(mn.mean.T), np.kron(mn.row_cov, mn.col_cov))


def sample(mn: MatrixNormal, count: int, seed: int, stream: int = rng.STREAM_MATNORM) -> np.ndarray:
    """Draw ``count`` matrices as ``M + A Z B^T`` with ``A A^T = Sigma``, ``B B^T = Lambda``.

    Returns an array of shape ``(count, n, d)``. Rank-deficient
    covariances are sampled through their jittered factors.
    """
    n, d = mn.shape
    z = rng.standard_normal(seed, stream, count, (n, d))
    a, b = mn.row_factor.lower, mn.col_factor.lower
    return mn.mean + a @ z @ b.T


def schur_complement(a, first_block_size: int) -> np.ndarray:
    """``A22 - A21 A11^{-1} A12`` for the leading ``first_block_size`` block."""
    a = check_symmetric(a)
    k = first_block_size
    if not 1 <= k < a.shape[0]:
        raise ValueError(f"first_block_size must lie in [1, {a.shape[0] - 1}]")
    a11, a12, a22 = a[:k, :k], a[:k, k:], a[k:, k:]
    factor = jitter_cholesky(a11)
    w = factor.solve_lower(a12)
    return symmetrize(a22 - w.T @ w)


def _blocks(mn: MatrixNormal, part: AxisPartition):
    n, d = mn.shape
    k = part.first_block_size
    if part.axis is Axis.ROWS:
        part.validate(n)
        return mn.mean[:k], mn.mean[k:], mn.row_cov, k
    part.validate(d)
    return mn.mean[:, :k], mn.mean[:, k:], mn.col_cov, k


def marginal(mn: MatrixNormal, part: AxisPartition, keep: Block = Block.FIRST) -> MatrixNormal:
    """Marginal law of one block of rows (or columns)."""
    m1, m2, cov, k = _blocks(mn, part)
    if Block(keep) is Block.FIRST:
        mean, sub = m1, cov[:k, :k]
    else:
        mean, sub = m2, cov[k:, k:]
    if part.axis is Axis.ROWS:
        return MatrixNormal(mean.copy(), sub.copy(), mn.col_cov.copy())
    return MatrixNormal(mean.copy(), mn.row_cov.copy(), sub.copy())


def condition(mn: MatrixNormal, part: AxisPartition, observed) -> MatrixNormal:
    """Law of the second block given the first block equals ``observed``.

    Rows: ``MN(M2 + S21 S11^-1 (X1 - M1), S22.1, Lambda)``.
    Cols: ``MN(M2 + (X1 - M1) L11^-1 L12, Sigma, L22.1)``.
    """
    m1, m2, cov, k = _blocks(mn, part)
    observed = np.atleast_2d(np.asarray(observed, dtype=float))
    if observed.shape != m1.shape:
        raise ValueError(f"observed block has shape {observed.shape}, expected {m1.shape}")
    factor = jitter_cholesky(cov[:k, :k])
    c12 = cov[:k, k:]
    w = factor.solve_lower(c12)
    schur = symmetrize(cov[k:, k:] - w.T @ w)
    if part.axis is Axis.ROWS:
        mean = m2 + c12.T @ factor.solve(observed - m1)
        return MatrixNormal(mean, schur, mn.col_cov.copy())
    mean = m2 + factor.solve((observed - m1).T).T @ c12
    return MatrixNormal(mean, mn.row_cov.copy(), schur)


def permute(mn: MatrixNormal, rows=None, cols=None) -> MatrixNormal:
    """Reorder rows and/or columns, so any index subset can be moved to the leading block."""
    n, d = mn.shape
    r = np.arange(n) if rows is None else np.asarray(rows, dtype=int)
    c = np.arange(d) if cols is None else np.asarray(cols, dtype=int)
    if sorted(r.tolist()) != list(range(n)) or sorted(c.tolist()) != list(range(d)):
        raise ValueError("rows and cols must be permutations of the axis indices")
    return MatrixNormal(mn.mean[np.ix_(r, c)], mn.row_cov[np.ix_(r, r)], mn.col_cov[np.ix_(c, c)])
