"""d-variate pre-Brownian motion ``MGP_d(0, min, Lambda)``.

On a grid ``t_1 < ... < t_n`` the path matrix is ``MN(0, C, Lambda)`` with
``C[i, j] = min(t_i, t_j)``. Increments over disjoint intervals are
independent, with ``E[(B_t - B_s)^T (B_t - B_s)] = |t - s| Lambda``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np

from . import kernels, matnorm, rng
from .kernels import KernelSpec
from .linalg import check_symmetric, jitter_cholesky
from .matnorm import MatrixNormal
from .process import MeanFunction, MultivariateGP, PathEnsemble, mc_zscores


class Method(str, Enum):
    CHOLESKY_JOINT = "cholesky_joint"
    INCREMENTAL_WALK = "incremental_walk"


def pre_bm_process(d: int, lam) -> MultivariateGP:
    lam = check_symmetric(lam, "lambda")
    if d < 1 or lam.shape != (d, d):
        raise ValueError(f"lambda must be {d}x{d}")
    return MultivariateGP(MeanFunction.zero(d), KernelSpec.min(), lam)


@dataclass(frozen=True)
class BrownianConfig:
    times: tuple
    lam: np.ndarray
    count: int
    seed: int

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValueError("times must be non-empty")
        if times[0] < 0:
            raise ValueError("times must be non-negative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        lam = check_symmetric(self.lam, "lambda")
        jitter_cholesky(lam)
        if self.count < 1:
            raise ValueError("count must be >= 1")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "lam", lam)

    @property
    def d(self) -> int:
        return self.lam.shape[0]


def simulate(config: BrownianConfig, method: Method | str = Method.CHOLESKY_JOINT) -> PathEnsemble:
    """Simulate paths on ``config.times``.

    ``cholesky_joint`` draws the joint ``MN(0, C, Lambda)``;
    ``incremental_walk`` accumulates ``sqrt(dt) * eps @ L^T`` with ``L`` the
    lower Cholesky factor of ``Lambda``. A leading ``t = 0`` is never
    sampled: its row is set to exact zeros.
    """
    method = Method(method)
    times = np.asarray(config.times)
    d = config.d
    start = 1 if times[0] == 0.0 else 0
    pos = times[start:]
    draws = np.zeros((config.count, times.size, d))
    if pos.size:
        if method is Method.CHOLESKY_JOINT:
            law = MatrixNormal(np.zeros((pos.size, d)), kernels.gram(KernelSpec.min(), pos), config.lam)
            draws[:, start:] = matnorm.sample(law, config.count, config.seed)
        else:
            lower = jitter_cholesky(config.lam).lower
            dt = np.diff(np.concatenate([[0.0], pos]))
            eps = rng.standard_normal(config.seed, rng.STREAM_WALK, config.count, (pos.size, d))
            steps = np.sqrt(dt)[None, :, None] * (eps @ lower.T)
            draws[:, start:] = np.cumsum(steps, axis=1)
    return PathEnsemble(times[:, None], draws, config.seed)


@dataclass(frozen=True)
class IncrementStat:
    label: str
    interval: tuple
    estimate: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    zscore: np.ndarray

    @property
    def max_z(self) -> float:
        return float(np.max(self.zscore))


@dataclass(frozen=True)
class IncrementReport:
    """Increment second moments, row-form scalars and disjoint-pair cross moments."""

    increments: list
    row_form: list | None
    cross: list
    cross_trace: list

    def all_stats(self) -> list:
        return [*self.increments, *(self.row_form or []), *self.cross, *self.cross_trace]

    @property
    def max_z(self) -> float:
        return max((s.max_z for s in self.all_stats()), default=0.0)

    def passed(self, z: float = 3.0) -> bool:
        return self.max_z <= z

    def to_dict(self) -> dict:
        def as_dict(s: IncrementStat) -> dict:
            return {
                "label": s.label,
                "interval": list(s.interval),
                "estimate": np.asarray(s.estimate).tolist(),
                "target": np.asarray(s.target).tolist(),
                "stderr": np.asarray(s.stderr).tolist(),
                "max_z": s.max_z,
            }

        return {
            "increments": [as_dict(s) for s in self.increments],
            "row_form": None if self.row_form is None else [as_dict(s) for s in self.row_form],
            "cross": [as_dict(s) for s in self.cross],
            "cross_trace": [as_dict(s) for s in self.cross_trace],
            "max_z": self.max_z,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        """Plot-ready rows: ``interval, entry, target, empirical, stderr``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["interval", "entry", "target", "empirical", "stderr"])
            for s in self.all_stats():
                est = np.atleast_1d(s.estimate)
                tgt = np.broadcast_to(np.atleast_1d(s.target), est.shape)
                se = np.broadcast_to(np.atleast_1d(s.stderr), est.shape)
                for idx in np.ndindex(est.shape):
                    entry = ",".join(str(i + 1) for i in idx) if est.size > 1 else ""
                    w.writerow([s.label, entry, repr(float(tgt[idx])), repr(float(est[idx])), repr(float(se[idx]))])


def _lookup(grid: np.ndarray, index: int) -> float:
    if not 0 <= index < grid.size:
        raise ValueError(f"interval endpoint {index} is not on the grid of {grid.size} points")
    return float(grid[index])


def increment_report(ensemble: PathEnsemble, lam, intervals) -> IncrementReport:
    """Check increment moments on ``intervals``, given as ``(s, t)`` grid-index pairs.

    Every pair of intervals that do not overlap (sharing at most an
    endpoint) also gets a cross-moment check against zero. The row-form
    scalar ``E[(B_t - B_s)(B_t - B_s)^T] = d |t - s|`` is reported only
    when ``Lambda`` is the identity.
    """
    lam = check_symmetric(lam, "lambda")
    grid = np.asarray(ensemble.grid)[:, 0]
    d = lam.shape[0]
    if ensemble.draws.shape[2] != d:
        raise ValueError("lambda dimension does not match the ensemble")
    identity = np.array_equal(lam, np.eye(d))

    incs, spans, labels = [], [], []
    for s, t in intervals:
        s, t = int(s), int(t)
        ts, tt = _lookup(grid, s), _lookup(grid, t)
        incs.append(ensemble.draws[:, t, :] - ensemble.draws[:, s, :])
        spans.append((min(ts, tt), max(ts, tt)))
        labels.append(f"{ts:g}-{tt:g}")

    increments, row_form = [], [] if identity else None
    for inc, (a, b), label in zip(incs, spans, labels):
        outer = inc[:, :, None] * inc[:, None, :]
        target = (b - a) * lam
        est, se, z = mc_zscores(outer, target)
        increments.append(IncrementStat(label, (a, b), est, target, se, z))
        if identity:
            sq = np.sum(inc * inc, axis=1)
            est, se, z = mc_zscores(sq, np.asarray(d * (b - a)))
            row_form.append(IncrementStat(f"{label} row", (a, b), est, np.asarray(d * (b - a)), se, z))

    cross, cross_trace = [], []
    for i, j in combinations(range(len(incs)), 2):
        (a1, b1), (a2, b2) = spans[i], spans[j]
        if not (b1 <= a2 or b2 <= a1) or a1 == b1 or a2 == b2:
            continue
        label = f"{labels[i]} x {labels[j]}"
        outer = incs[i][:, :, None] * incs[j][:, None, :]
        zero = np.zeros((d, d))
        est, se, z = mc_zscores(outer, zero)
        cross.append(IncrementStat(label, (spans[i], spans[j]), est, zero, se, z))
        tr = np.sum(incs[i] * incs[j], axis=1)
        est, se, z = mc_zscores(tr, np.asarray(0.0))
        cross_trace.append(IncrementStat(f"{label} trace", (spans[i], spans[j]), est, np.asarray(0.0), se, z))

    return IncrementReport(increments, row_form, cross, cross_trace)


def default_intervals(n: int) -> list[tuple[int, int]]:
    """Consecutive grid intervals plus the full span."""
    out = [(i, i + 1) for i in range(n - 1)]
    if n > 2:
        out.append((0, n - 1))
    return out
