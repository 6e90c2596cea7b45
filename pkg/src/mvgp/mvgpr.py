"""Multivariate Gaussian process regression.

Outputs are modelled as ``Y ~ MN(0, K', Lambda)`` where
``K'[i, j] = k(x_i, x_j) + delta_ij sigma_n^2`` and ``Lambda = Phi Phi^T``
with ``Phi`` lower triangular, positive diagonal and ``Phi[0, 0] = 1``.
The last constraint removes the ``(c K', Lambda / c)`` scale gauge under
which the likelihood is flat.

The optimizer works on the flat vector returned by
:meth:`MvgprModel.parameters`::

    [kernel log-params..., log sigma_n^2, free Phi entries...]

where the free ``Phi`` entries run row by row over the lower triangle,
skipping ``Phi[0, 0]``; diagonal entries appear as ``log Phi[i, i]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import kernels, rng
from .kernels import Family, KernelSpec
from .linalg import Factor, NotPositiveDefiniteError, jitter_cholesky, symmetrize
from .matnorm import MatrixNormal, log_density

RESTART_LOG_RANGE = (math.log(1e-2), math.log(1e2))


@dataclass(frozen=True)
class TrainingSet:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        x = kernels.as_inputs(self.X)
        y = np.asarray(self.Y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise ValueError("Y must be an n x d matrix")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"X has {x.shape[0]} rows but Y has {y.shape[0]}")
        if not np.all(np.isfinite(y)):
            raise ValueError("Y contains non-finite values")
        object.__setattr__(self, "X", x)
        object.__setattr__(self, "Y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.Y.shape[1]


def phi_free_indices(d: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(d) for j in range(i + 1) if (i, j) != (0, 0)]


def phi_from_lambda(lam) -> np.ndarray:
    """Constrained factor of ``lam / lam[0, 0]`` (the gauge-fixed representative)."""
    lam = np.asarray(lam, dtype=float)
    return jitter_cholesky(lam / lam[0, 0]).lower


@dataclass(frozen=True, eq=False)
class MvgprModel:
    """Hyperparameters of an MV-GPR model bound to its training set.

    The Cholesky factor of ``K'(X, X)`` is computed once and cached.
    """

    kernel: KernelSpec
    phi: np.ndarray
    data: TrainingSet
    fixed_noise: bool = False

    def __post_init__(self):
        phi = np.tril(np.atleast_2d(np.asarray(self.phi, dtype=float)))
        d = self.data.d
        if phi.shape != (d, d):
            raise ValueError(f"phi must be {d}x{d}")
        if phi[0, 0] != 1.0:
            raise ValueError("phi[0, 0] must equal 1")
        if np.any(np.diag(phi) <= 0):
            raise ValueError("phi must have a positive diagonal")
        kernels.as_inputs(self.data.X, self.kernel)
        object.__setattr__(self, "phi", phi)

    @property
    def lam(self) -> np.ndarray:
        return symmetrize(self.phi @ self.phi.T)

    @cached_property
    def train_cov(self) -> np.ndarray:
        return kernels.noisy_gram(self.kernel, self.data.X)

    @cached_property
    def factor(self) -> Factor:
        return jitter_cholesky(self.train_cov)

    def parameter_names(self) -> list[str]:
        names = self.kernel.log_param_names()
        if not self.fixed_noise:
            names.append("log_noise_variance")
        for i, j in phi_free_indices(self.data.d):
            names.append(f"log_phi_{i + 1}{j + 1}" if i == j else f"phi_{i + 1}{j + 1}")
        return names

    def parameters(self) -> np.ndarray:
        parts = [self.kernel.log_params()]
        if not self.fixed_noise:
            parts.append([math.log(self.kernel.noise_variance)])
        parts.append([math.log(self.phi[i, j]) if i == j else self.phi[i, j] for i, j in phi_free_indices(self.data.d)])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def with_parameters(self, theta) -> "MvgprModel":
        theta = np.asarray(theta, dtype=float)
        names = self.parameter_names()
        if theta.shape != (len(names),):
            raise ValueError(f"expected {len(names)} parameters, got {theta.shape}")
        nk = len(self.kernel.log_param_names())
        kernel = self.kernel.with_log_params(theta[:nk])
        pos = nk
        if not self.fixed_noise:
            kernel = kernel.with_noise(math.exp(theta[pos]))
            pos += 1
        else:
            kernel = kernel.with_noise(self.kernel.noise_variance)
        d = self.data.d
        phi = np.zeros((d, d))
        phi[0, 0] = 1.0
        for (i, j), v in zip(phi_free_indices(d), theta[pos:]):
            phi[i, j] = math.exp(v) if i == j else v
        return MvgprModel(kernel, phi, self.data, self.fixed_noise)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "phi": self.phi.tolist(),
            "fixed_noise": self.fixed_noise,
            "training": {"X": self.data.X.tolist(), "Y": self.data.Y.tolist()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MvgprModel":
        training = TrainingSet(np.asarray(data["training"]["X"]), np.asarray(data["training"]["Y"]))
        return cls(KernelSpec.from_dict(data["kernel"]), np.asarray(data["phi"]), training, data.get("fixed_noise", False))


def nll(model: MvgprModel, data: TrainingSet | None = None) -> float:
    """Negative log marginal likelihood ``-log MN(Y; 0, K'(X, X), Phi Phi^T)``."""
    if data is not None and data is not model.data:
        model = replace(model, data=data)
    law = MatrixNormal(np.zeros_like(model.data.Y), model.train_cov, model.lam)
    return -log_density(law, model.data.Y, allow_jitter=True)


def nll_and_grad(model: MvgprModel) -> tuple[float, np.ndarray]:
    """Value and gradient over :meth:`MvgprModel.parameters`.

    With ``alpha = K'^-1 Y`` and ``S = Y^T K'^-1 Y``::

        dnll/dK'     = 1/2 (d K'^-1 - alpha Lambda^-1 alpha^T)
        dnll/dLambda = 1/2 (n Lambda^-1 - Lambda^-1 S Lambda^-1)
        dnll/dPhi    = 2 dnll/dLambda Phi
    """
    data = model.data
    n, d = data.n, data.d
    kf = model.factor
    lam = model.lam
    lf = jitter_cholesky(lam)
    alpha = kf.solve(data.Y)
    lam_inv = lf.solve(np.eye(d))
    s = symmetrize(data.Y.T @ alpha)
    quad = float(np.sum(lam_inv * s))
    value = 0.5 * (n * d * math.log(2 * math.pi) + d * kf.log_det + n * lf.log_det + quad)

    k_inv = kf.solve(np.eye(n))
    g_k = 0.5 * (d * k_inv - alpha @ lam_inv @ alpha.T)
    grads = [float(np.sum(g_k * dk)) for dk in kernels.gram_gradients(model.kernel, data.X)]
    if not model.fixed_noise:
        grads.append(model.kernel.noise_variance * float(np.trace(g_k)))
    g_lam = 0.5 * (n * lam_inv - lam_inv @ s @ lam_inv)
    g_phi = 2.0 * g_lam @ model.phi
    for i, j in phi_free_indices(d):
        grads.append(g_phi[i, j] * model.phi[i, j] if i == j else g_phi[i, j])
    return value, np.asarray(grads)


def nll_grad(model: MvgprModel, data: TrainingSet | None = None) -> np.ndarray:
    if data is not None and data is not model.data:
        model = replace(model, data=data)
    return nll_and_grad(model)[1]


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    ``initial`` gives explicit starting hyperparameters as a model; when it
    is None every restart is drawn at random. Exactly ``restarts`` starts
    are run either way (an explicit start counts as the first).
    """

    max_iterations: int = 200
    gradient_tolerance: float = 1e-5
    restarts: int = 5
    seed: int = 0
    initial: MvgprModel | None = None
    noise_variance: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be positive")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be > 0")
        if self.noise_variance is not None and self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")


@dataclass
class FitReport:
    restarts: list = field(default_factory=list)
    best_restart: int = -1

    @property
    def best(self) -> dict:
        return self.restarts[self.best_restart]

    def to_dict(self) -> dict:
        return {"best_restart": self.best_restart, "restarts": self.restarts}


def _objective(template: MvgprModel, theta: np.ndarray):
    try:
        model = template.with_parameters(theta)
        value, grad = nll_and_grad(model)
    except (NotPositiveDefiniteError, ValueError, OverflowError, FloatingPointError):
        return math.inf, None
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        return math.inf, None
    return value, grad


def minimize_bfgs(template: MvgprModel, theta0: np.ndarray, max_iterations: int, gtol: float) -> dict:
    """BFGS with Armijo backtracking; every accepted step strictly lowers the nll."""
    theta = np.asarray(theta0, dtype=float)
    value, grad = _objective(template, theta)
    if grad is None:
        return {"theta": theta, "nll": math.inf, "history": [], "converged": False, "status": "factorization failed at start"}
    h = np.eye(theta.size)
    history = [value]
    status = "max_iterations"
    converged = False
    for _ in range(max_iterations):
        if np.linalg.norm(grad) <= gtol:
            converged, status = True, "gradient_tolerance"
            break
        direction = -h @ grad
        slope = float(grad @ direction)
        if slope >= 0:
            h = np.eye(theta.size)
            direction, slope = -grad, -float(grad @ grad)
        # cap the step in log space to keep exp() finite
        step = min(1.0, 5.0 / max(np.max(np.abs(direction)), 1e-300))
        accepted = False
        while step > 1e-12:
            trial = theta + step * direction
            tv, tg = _objective(template, trial)
            if tg is not None and tv <= value + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            status = "line search failed"
            break
        s = trial - theta
        y = tg - grad
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            rho = 1.0 / sy
            eye = np.eye(theta.size)
            h = (eye - rho * np.outer(s, y)) @ h @ (eye - rho * np.outer(y, s)) + rho * np.outer(s, s)
        theta, value, grad = trial, tv, tg
        history.append(value)
    else:
        if np.linalg.norm(grad) <= gtol:
            converged, status = True, "gradient_tolerance"
    return {"theta": theta, "nll": value, "history": history, "converged": converged, "status": status}


def _random_start(family: Family, p: int, d: int, fixed_noise: bool, gen: np.random.Generator) -> np.ndarray:
    lo, hi = RESTART_LOG_RANGE
    nk = {Family.SQUARED_EXPONENTIAL: 1 + p, Family.LINEAR: 2, Family.MIN: 0}[family]
    theta = list(gen.uniform(lo, hi, size=nk))
    if not fixed_noise:
        theta.append(gen.uniform(lo, hi))
    for i, j in phi_free_indices(d):
        theta.append(0.5 * gen.uniform(lo, hi) if i == j else gen.uniform(-1.0, 1.0))
    return np.asarray(theta)


def _template(data: TrainingSet, family, noise_variance: float | None) -> MvgprModel:
    family = kernels.parse_family(family)
    if family is Family.SQUARED_EXPONENTIAL:
        kernel = KernelSpec.squared_exponential(1.0, [1.0] * data.p)
    elif family is Family.LINEAR:
        kernel = KernelSpec.linear(1.0, 1.0)
    else:
        kernel = KernelSpec.min()
    fixed = noise_variance is not None
    kernel = kernel.with_noise(noise_variance if fixed else 1.0)
    return MvgprModel(kernel, np.eye(data.d), data, fixed)


def fit(data: TrainingSet, kernel_family, config: FitConfig = FitConfig()) -> tuple[MvgprModel, FitReport]:
    """Maximum-likelihood fit over ``config.restarts`` starts.

    The winner is the lowest final nll (ties broken by restart index).

    Raises
    ------
    NotPositiveDefiniteError
        If every start fails to factorize.
    """
    noise = config.noise_variance
    if config.initial is not None and noise is None and config.initial.fixed_noise:
        noise = config.initial.kernel.noise_variance
    template = _template(data, kernel_family, noise)
    gen = rng.generator(config.seed, rng.STREAM_RESTARTS)
    starts = []
    if config.initial is not None:
        init = replace(config.initial, data=data, fixed_noise=template.fixed_noise)
        if template.fixed_noise:
            init = replace(init, kernel=init.kernel.with_noise(noise))
        template = init
        starts.append(init.parameters())
    while len(starts) < config.restarts:
        starts.append(_random_start(template.kernel.family, data.p, data.d, template.fixed_noise, gen))

    report = FitReport()
    best = None
    for r, theta0 in enumerate(starts):
        result = minimize_bfgs(template, theta0, config.max_iterations, config.gradient_tolerance)
        report.restarts.append(
            {
                "restart": r,
                "initial_nll": result["history"][0] if result["history"] else None,
                "final_nll": result["nll"] if math.isfinite(result["nll"]) else None,
                "iterations": max(len(result["history"]) - 1, 0),
                "converged": result["converged"],
                "status": result["status"],
                "nll_history": result["history"],
            }
        )
        if math.isfinite(result["nll"]) and (best is None or result["nll"] < best[0]):
            best = (result["nll"], r, result["theta"])
    if best is None:
        raise NotPositiveDefiniteError("every restart failed to factorize the training covariance")
    report.best_restart = best[1]
    model = template.with_parameters(best[2])
    report.restarts[best[1]]["parameters"] = dict(zip(model.parameter_names(), best[2].tolist()))
    return model, report


@dataclass(frozen=True)
class PredictiveDistribution:
    """``MN(mean, row_cov, col_cov)`` over the ``m x d`` test outputs."""

    X: np.ndarray
    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def stddev(self) -> np.ndarray:
        """Marginal standard deviations ``sqrt(row_cov[i, i] * col_cov[j, j])``."""
        var = np.outer(np.diag(self.row_cov), np.diag(self.col_cov))
        return np.sqrt(np.clip(var, 0.0, None))


def predict(model: MvgprModel, x_star, latent: bool = False) -> PredictiveDistribution:
    """Closed-form predictive law at ``x_star``.

    ``mean = K'(X*, X) K'(X, X)^-1 Y``, ``row_cov = K'(X*, X*) - K'(X*, X)
    K'(X, X)^-1 K'(X, X*)`` and ``col_cov = Lambda``. ``K'(X*, X*)``
    includes the noise diagonal; ``latent=True`` removes it from
    ``row_cov`` afterwards (negative eigenvalues clamped at zero).
    """
    xs = kernels.as_inputs(x_star, model.kernel)
    if xs.shape[1] != model.data.p:
        raise ValueError(f"x_star has {xs.shape[1]} columns, training inputs have {model.data.p}")
    cross = kernels.gram(model.kernel, xs, model.data.X)
    mean = cross @ model.factor.solve(model.data.Y)
    w = model.factor.solve_lower(cross.T)
    row_cov = symmetrize(kernels.noisy_gram(model.kernel, xs) - w.T @ w)
    if latent:
        row_cov = row_cov - model.kernel.noise_variance * np.eye(xs.shape[0])
        vals, vecs = np.linalg.eigh(row_cov)
        row_cov = symmetrize((vecs * np.clip(vals, 0.0, None)) @ vecs.T)
    return PredictiveDistribution(xs, mean, row_cov, model.lam)


def predictive_vec_cov(pred: PredictiveDistribution) -> np.ndarray:
    """``cov(vec(f*^T)) = row_cov kron col_cov``."""
    return np.kron(pred.row_cov, pred.col_cov)


def save_model(model: MvgprModel, path, report: FitReport | None = None, extra: dict | None = None) -> None:
    payload = model.to_dict()
    if report is not None:
        payload["fit_report"] = report.to_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_model(path) -> tuple[MvgprModel, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    return MvgprModel.from_dict(payload), payload
