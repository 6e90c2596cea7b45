"""The d-variate Gaussian process ``MGP_d(u, k, Lambda)``.

At any grid ``t_1..t_n`` the stacked values ``F = [f(t_1); ...; f(t_n)]``
(each ``f(t)`` a ``1 x d`` row) follow ``MN(M, K, Lambda)`` with mean rows
``u(t_i)`` and ``K[i, j] = k(t_i, t_j)``. Consequently

* ``E[f(t)] = u(t)``
* ``E[(f(t_s) - u(t_s)) (f(t_l) - u(t_l))^T] = tr(Lambda) k(t_s, t_l)``
* ``E[(F - M)^T (F - M)] = tr(K) Lambda``

which :func:`check_moments` verifies empirically.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels, matnorm
from .kernels import KernelSpec
from .linalg import check_symmetric, jitter_cholesky
from .matnorm import MatrixNormal

DIAGONAL_RTOL = 1e-12


class MeanForm(str, Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    TABULATED = "tabulated"


def _key(point) -> tuple:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(point, dtype=float)))


@dataclass(frozen=True)
class MeanFunction:
    """Vector-valued mean ``u: T -> R^d``.

    A tabulated mean is defined only at its listed points; asking for any
    other point is an error (no interpolation).
    """

    form: MeanForm
    output_dim: int
    value: tuple = ()
    table: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "form", MeanForm(self.form))
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")
        if self.form is MeanForm.CONSTANT and len(self.value) != self.output_dim:
            raise ValueError("constant mean must have output_dim entries")
        if self.form is MeanForm.TABULATED:
            for k, v in self.table.items():
                if len(v) != self.output_dim:
                    raise ValueError(f"tabulated mean at {k} has wrong length")

    @classmethod
    def zero(cls, d: int) -> "MeanFunction":
        return cls(MeanForm.ZERO, d)

    @classmethod
    def constant(cls, c) -> "MeanFunction":
        c = tuple(float(v) for v in np.atleast_1d(c))
        return cls(MeanForm.CONSTANT, len(c), value=c)

    @classmethod
    def tabulated(cls, points, values) -> "MeanFunction":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        points = list(points)
        if len(points) != values.shape[0]:
            raise ValueError("points and values differ in length")
        table = {_key(p): tuple(row) for p, row in zip(points, values)}
        return cls(MeanForm.TABULATED, values.shape[1], table=table)

    def __call__(self, grid) -> np.ndarray:
        """Mean matrix ``M`` of shape ``(n, d)`` at the grid points."""
        x = kernels.as_inputs(grid)
        n, d = x.shape[0], self.output_dim
        if self.form is MeanForm.ZERO:
            return np.zeros((n, d))
        if self.form is MeanForm.CONSTANT:
            return np.tile(np.asarray(self.value), (n, 1))
        rows = []
        for point in x:
            key = _key(point)
            if key not in self.table:
                raise ValueError(f"tabulated mean is undefined at {key}")
            rows.append(self.table[key])
        return np.asarray(rows, dtype=float)

    def component(self, i: int) -> "MeanFunction":
        if self.form is MeanForm.ZERO:
            return MeanFunction.zero(1)
        if self.form is MeanForm.CONSTANT:
            return MeanFunction.constant([self.value[i]])
        return MeanFunction(MeanForm.TABULATED, 1, table={k: (v[i],) for k, v in self.table.items()})

    @classmethod
    def stack(cls, parts: list["MeanFunction"]) -> "MeanFunction":
        forms = {p.form for p in parts}
        if forms == {MeanForm.ZERO}:
            return cls.zero(len(parts))
        if forms <= {MeanForm.ZERO, MeanForm.CONSTANT}:
            return cls.constant([p.value[0] if p.form is MeanForm.CONSTANT else 0.0 for p in parts])
        keys = set.intersection(*(set(p.table) for p in parts if p.form is MeanForm.TABULATED))
        table = {
            k: tuple(
                p.table[k][0] if p.form is MeanForm.TABULATED else (p.value[0] if p.value else 0.0)
                for p in parts
            )
            for k in keys
        }
        return cls(MeanForm.TABULATED, len(parts), table=table)

    def to_dict(self) -> dict:
        if self.form is MeanForm.ZERO:
            return {"form": "zero", "output_dim": self.output_dim}
        if self.form is MeanForm.CONSTANT:
            return {"form": "constant", "value": list(self.value)}
        keys = sorted(self.table)
        return {
            "form": "tabulated",
            "points": [list(k) for k in keys],
            "values": [list(self.table[k]) for k in keys],
        }

    @classmethod
    def from_dict(cls, data: dict, d: int | None = None) -> "MeanFunction":
        form = MeanForm(data.get("form", "zero"))
        if form is MeanForm.ZERO:
            return cls.zero(int(data.get("output_dim", d or 1)))
        if form is MeanForm.CONSTANT:
            return cls.constant(data["value"])
        return cls.tabulated(data["points"], data["values"])


@dataclass(frozen=True)
class MultivariateGP:
    """``MGP_d(mean, kernel, lam)``; the kernel's noise variance is ignored here."""

    mean: MeanFunction
    kernel: KernelSpec
    lam: np.ndarray

    def __post_init__(self):
        lam = check_symmetric(self.lam, "lambda")
        if lam.shape[0] != self.mean.output_dim:
            raise ValueError("lambda dimension does not match the mean's output_dim")
        jitter_cholesky(lam)
        object.__setattr__(self, "lam", lam)

    @property
    def output_dim(self) -> int:
        return self.lam.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.to_dict(), "kernel": self.kernel.to_dict(), "lambda": self.lam.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "MultivariateGP":
        lam = np.asarray(data["lambda"], dtype=float)
        mean = MeanFunction.from_dict(data.get("mean", {"form": "zero"}), d=lam.shape[0])
        return cls(mean, KernelSpec.from_dict(data["kernel"]), lam)


@dataclass(frozen=True)
class PathEnsemble:
    """Sampled paths: ``draws[r]`` is the ``n x d`` matrix of draw ``r`` on ``grid``."""

    grid: np.ndarray
    draws: np.ndarray
    seed: int

    @property
    def count(self) -> int:
        return self.draws.shape[0]

    def to_csv(self, path) -> None:
        """Write long-format rows ``t, draw_index, f_1..f_d``."""
        write_paths_csv(self, path)


def write_paths_csv(ensemble: PathEnsemble, path) -> None:
    grid = np.asarray(ensemble.grid)
    p = grid.shape[1]
    d = ensemble.draws.shape[2]
    tcols = ["t"] if p == 1 else [f"t_{i + 1}" for i in range(p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(tcols + ["draw_index"] + [f"f_{j + 1}" for j in range(d)])
        for r, draw in enumerate(ensemble.draws):
            for t, row in zip(grid, draw):
                w.writerow([repr(float(v)) for v in t] + [r] + [repr(float(v)) for v in row])


def finite_dim(mgp: MultivariateGP, grid) -> MatrixNormal:
    """Law of the process on ``grid``: ``MN(u(grid), gram(k, grid), Lambda)``."""
    x = kernels.as_inputs(grid, mgp.kernel)
    return MatrixNormal(mgp.mean(x), kernels.gram(mgp.kernel, x), mgp.lam)


def sample_paths(mgp: MultivariateGP, grid, count: int, seed: int) -> PathEnsemble:
    x = kernels.as_inputs(grid, mgp.kernel)
    draws = matnorm.sample(finite_dim(mgp, x), count, seed)
    return PathEnsemble(x, draws, seed)


def mc_zscores(stat: np.ndarray, target: np.ndarray):
    """Mean of per-draw statistics (axis 0) against a target, in standard-error units."""
    count = stat.shape[0]
    est = stat.mean(axis=0)
    if count > 1:
        se = stat.std(axis=0, ddof=1) / np.sqrt(count)
    else:
        se = np.full(est.shape, np.inf)
    dev = est - target
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(dev) / se, np.where(dev == 0, 0.0, np.inf))
    return est, se, z


@dataclass(frozen=True)
class MomentCheck:
    name: str
    estimate: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    zscore: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.estimate - self.target)))

    @property
    def max_z(self) -> float:
        return float(np.max(self.zscore))

    def passed(self, z: float = 3.0) -> bool:
        return self.max_z <= z


@dataclass(frozen=True)
class MomentReport:
    mean: MomentCheck
    scalar_cross: MomentCheck
    column: MomentCheck

    @property
    def checks(self) -> tuple[MomentCheck, MomentCheck, MomentCheck]:
        return (self.mean, self.scalar_cross, self.column)

    def passed(self, z: float = 3.0) -> bool:
        return all(c.passed(z) for c in self.checks)


def check_moments(ensemble: PathEnsemble, mgp: MultivariateGP) -> MomentReport:
    """Compare an ensemble against the three moment identities of ``mgp``.

    Deviations are reported raw and in Monte Carlo standard errors. The
    residuals are centered at the true mean ``u``.
    """
    law = finite_dim(mgp, ensemble.grid)
    if ensemble.draws.shape[1:] != law.shape:
        raise ValueError(f"ensemble draws are {ensemble.draws.shape[1:]}, process gives {law.shape}")
    resid = ensemble.draws - law.mean
    k, lam = law.row_cov, mgp.lam

    mean = MomentCheck("mean", *_with_target(ensemble.draws, law.mean))
    # (f(t_s) - u)(f(t_l) - u)^T as a scalar per (s, l)
    cross = np.einsum("rsa,rla->rsl", resid, resid)
    scalar = MomentCheck("scalar_cross", *_with_target(cross, np.trace(lam) * k))
    col = np.einsum("rna,rnb->rab", resid, resid)
    column = MomentCheck("column", *_with_target(col, np.trace(k) * lam))
    return MomentReport(mean, scalar, column)


def _with_target(stat, target):
    est, se, z = mc_zscores(stat, target)
    return est, target, se, z


@dataclass(frozen=True)
class StationarityResult:
    stationary: bool
    witness: dict | None = None

    def __bool__(self) -> bool:
        return self.stationary


def is_strictly_stationary(mgp: MultivariateGP, grid, shift, tol: float = 1e-12) -> StationarityResult:
    """Compare the finite-dimensional parameters on ``grid`` and ``grid + shift``.

    ``Lambda`` does not depend on the index, so only the mean and the row
    covariance are compared. On failure the first violating entry (mean
    before covariance, row-major) is returned as the witness.
    """
    x = kernels.as_inputs(grid, mgp.kernel)
    shifted = x + np.asarray(shift, dtype=float)
    base, moved = finite_dim(mgp, x), finite_dim(mgp, shifted)
    for name, a, b in (("mean", base.mean, moved.mean), ("row_cov", base.row_cov, moved.row_cov)):
        bad = np.argwhere(np.abs(a - b) > tol)
        if bad.size:
            idx = tuple(int(i) for i in bad[0])
            witness = {"parameter": name, "index": idx, "original": float(a[idx]), "shifted": float(b[idx])}
            if name == "row_cov":
                witness["points"] = (x[idx[0]].tolist(), x[idx[1]].tolist())
            else:
                witness["point"] = x[idx[0]].tolist()
            return StationarityResult(False, witness)
    return StationarityResult(True)


@dataclass(frozen=True)
class ScalarGP:
    """Scalar component ``GP(mean, scale * kernel)``."""

    mean: MeanFunction
    kernel: KernelSpec
    scale: float

    def gram(self, grid) -> np.ndarray:
        return self.scale * kernels.gram(self.kernel, grid)


def is_diagonal(lam, rtol: float = DIAGONAL_RTOL) -> bool:
    lam = np.asarray(lam, dtype=float)
    off = lam - np.diag(np.diag(lam))
    return bool(np.max(np.abs(off), initial=0.0) <= rtol * np.max(np.abs(np.diag(lam))))


def independent_components(mgp: MultivariateGP) -> list[ScalarGP] | None:
    """The ``d`` independent scalar GPs when ``Lambda`` is diagonal, else None.

    Component ``i`` has mean ``u_i`` and kernel ``Lambda_ii * k``. The
    components are identically distributed only when additionally the
    mean components agree and ``Lambda = c I``; see
    :func:`identically_distributed`.
    """
    if not is_diagonal(mgp.lam):
        return None
    return [ScalarGP(mgp.mean.component(i), mgp.kernel, float(mgp.lam[i, i])) for i in range(mgp.output_dim)]


def identically_distributed(components: list[ScalarGP]) -> bool:
    first = components[0]
    return all(c.scale == first.scale and c.mean == first.mean for c in components)


def assemble_components(components: list[ScalarGP]) -> MultivariateGP:
    """Inverse of :func:`independent_components`."""
    kernel = components[0].kernel
    if any(c.kernel != kernel for c in components):
        raise ValueError("components must share one base kernel")
    lam = np.diag([c.scale for c in components])
    return MultivariateGP(MeanFunction.stack([c.mean for c in components]), kernel, lam)


@dataclass(frozen=True)
class CrossCovariance:
    matrix: np.ndarray
    trace: float
    trace_stderr: float

    @property
    def degenerate(self) -> bool:
        return not np.isfinite(self.trace_stderr)


def cross_covariance(ensemble: PathEnsemble, i: int, j: int) -> CrossCovariance:
    """Empirical ``E[(xi_i - m_i)(xi_j - m_j)^T]`` between output columns ``i`` and ``j``.

    ``xi_i`` is column ``i`` of a draw (the component's values on the grid)
    and ``m_i`` its empirical mean. The trace estimates ``tr(K) Lambda_ij``.
    With a single draw the estimate is zero and its standard error infinite.
    """
    d = ensemble.draws.shape[2]
    if not (0 <= i < d and 0 <= j < d):
        raise ValueError(f"components must lie in [0, {d - 1}]")
    if i == j:
        raise ValueError("cross_covariance needs two distinct components")
    xi = ensemble.draws[:, :, i]
    xj = ensemble.draws[:, :, j]
    count = xi.shape[0]
    ci = xi - xi.mean(axis=0)
    cj = xj - xj.mean(axis=0)
    denom = max(count - 1, 1)
    matrix = ci.T @ cj / denom
    per_draw = np.sum(ci * cj, axis=1)
    se = float(per_draw.std(ddof=1) / np.sqrt(count)) if count > 1 else float("inf")
    return CrossCovariance(matrix, float(np.trace(matrix)), se)
