"""End-to-end property suite.

Each check builds random or fixed instances, runs the library path and an
independent reference computation (dense Kronecker Gaussians through
scipy, explicit index conditioning, finite differences, explicit loops)
and compares them at a fixed tolerance. Monte Carlo comparisons are
expressed in standard errors. ``run_checks`` is what ``mvgp check``
executes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import brownian, kernels, matnorm, mvgpr, process
from .brownian import BrownianConfig, Method
from .kernels import KernelSpec
from .linalg import vec
from .matnorm import Axis, AxisPartition, Block, MatrixNormal
from .mvgpr import FitConfig, MvgprModel, TrainingSet
from .process import MeanFunction, MultivariateGP

Z_LIMIT = 3.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float = 0.0
    budget: float = float("inf")
    details: dict = field(default_factory=dict)

    @property
    def within_budget(self) -> bool:
        return self.seconds < self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        summary = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] {self.name} ({self.seconds:.2f}s / {self.budget:g}s) {summary}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def random_spd(gen: np.random.Generator, k: int) -> np.ndarray:
    a = gen.standard_normal((k, k))
    return a @ a.T + 0.5 * np.eye(k)


def random_matnorm(gen: np.random.Generator, n: int, d: int) -> MatrixNormal:
    return MatrixNormal(gen.standard_normal((n, d)), random_spd(gen, n), random_spd(gen, d))


def gaussian_condition(mean, cov, observed_idx, observed):
    """Reference conditioning of a dense Gaussian by explicit linear solves."""
    idx = np.asarray(observed_idx)
    rest = np.setdiff1d(np.arange(mean.size), idx)
    s11 = cov[np.ix_(idx, idx)]
    s21 = cov[np.ix_(rest, idx)]
    gain = np.linalg.solve(s11, s21.T).T
    return mean[rest] + gain @ (observed - mean[idx]), cov[np.ix_(rest, rest)] - gain @ s21.T


def kron_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    p, q = b.shape
    out = np.empty((a.shape[0] * p, a.shape[1] * q))
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for r in range(p):
                for c in range(q):
                    out[i * p + r, j * q + c] = a[i, j] * b[r, c]
    return out


def _timed(name: str, budget: float):
    def deco(fn):
        def run(seed: int = 0) -> CheckResult:
            t0 = time.perf_counter()
            passed, details = fn(seed)
            return CheckResult(name, bool(passed), time.perf_counter() - t0, budget, details)

        run.check_name = name
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return deco


@_timed("vec_equivalence", 5.0)
def check_vec_equivalence(seed):
    """Matrix-normal log density equals the vec-ed Kronecker Gaussian density."""
    gen = np.random.default_rng([seed, 1])
    worst = 0.0
    for _ in range(100):
        n, d = gen.integers(1, 6, size=2)
        mn = random_matnorm(gen, n, d)
        x = gen.standard_normal((n, d))
        ref = stats.multivariate_normal(vec(mn.mean), np.kron(mn.col_cov, mn.row_cov)).logpdf(vec(x))
        worst = max(worst, abs(matnorm.log_density(mn, x) - ref))
    return worst <= 1e-9, {"max_abs_error": worst}


@_timed("conditioning", 10.0)
def check_conditioning(seed):
    """Row/column conditioning and the density chain rule against dense-vec oracles."""
    gen = np.random.default_rng([seed, 2])
    mean_err = cov_err = chain_err = 0.0
    for _ in range(50):
        n, d = gen.integers(2, 6, size=2)
        mn = random_matnorm(gen, n, d)
        x = mn.sample(1, int(gen.integers(2**31)))[0]
        full = matnorm.vec_distribution(mn)
        for axis in (Axis.ROWS, Axis.COLS):
            length = n if axis is Axis.ROWS else d
            k = int(gen.integers(1, length))
            part = AxisPartition(axis, k)
            if axis is Axis.ROWS:
                x1, x2 = x[:k], x[k:]
                obs_idx = [i + n * j for j in range(d) for i in range(k)]
            else:
                x1, x2 = x[:, :k], x[:, k:]
                obs_idx = list(range(n * k))
            cond = matnorm.condition(mn, part, x1)
            ref_mean, ref_cov = gaussian_condition(full.mean, full.cov, obs_idx, vec(x1))
            got = matnorm.vec_distribution(cond)
            mean_err = max(mean_err, np.max(np.abs(got.mean - ref_mean)))
            cov_err = max(cov_err, np.max(np.abs(got.cov - ref_cov)))
            marg = matnorm.marginal(mn, part, Block.FIRST)
            lhs = matnorm.log_density(mn, x)
            rhs = matnorm.log_density(marg, x1) + matnorm.log_density(cond, x2)
            chain_err = max(chain_err, abs(lhs - rhs))
    passed = mean_err <= 1e-8 and cov_err <= 1e-8 and chain_err <= 1e-8
    return passed, {"mean_error": mean_err, "cov_error": cov_err, "chain_rule_error": chain_err}


def moment_configs():
    """Three (kernel, Lambda, mean, grid) settings used by the moment check."""
    return [
        (
            "se",
            MultivariateGP(MeanFunction.constant([1.0, -2.0]), KernelSpec.squared_exponential(1.0, 1.0), np.array([[1.0, 0.5], [0.5, 1.0]])),
            [0.0, 0.5, 1.3],
        ),
        ("min", MultivariateGP(MeanFunction.zero(2), KernelSpec.min(), np.eye(2)), [1.0, 2.0, 3.0]),
        (
            "linear",
            MultivariateGP(
                MeanFunction.tabulated([-1.0, 0.5, 2.0], [[0.0, 1.0, 2.0], [1.0, 0.0, -1.0], [3.0, 3.0, 3.0]]),
                KernelSpec.linear(0.5, 1.0),
                np.array([[1.0, 0.2, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 2.0]]),
            ),
            [-1.0, 0.5, 2.0],
        ),
    ]


@_timed("process_moments", 60.0)
def check_process_moments(seed):
    """Mean, scalar cross-moment and column-moment identities at 200k draws."""
    details, passed = {}, True
    for i, (label, mgp, grid) in enumerate(moment_configs()):
        ens = process.sample_paths(mgp, grid, 200_000, seed * 100 + 30 + i)
        report = process.check_moments(ens, mgp)
        for c in report.checks:
            details[f"{label}_{c.name}_maxz"] = c.max_z
        passed &= report.passed(Z_LIMIT)
    return passed, details


@_timed("consistency", 2.0)
def check_consistency(seed):
    """Sub-grid marginals of the finite-dimensional law equal the sub-grid law exactly."""
    gen = np.random.default_rng([seed, 4])
    lam = np.array([[2.0, 0.3], [0.3, 1.0]])
    specs = [
        (KernelSpec.squared_exponential(1.7, [0.8, 1.3]), 2),
        (KernelSpec.min(), 1),
        (KernelSpec.linear(0.4, 2.0), 3),
    ]
    exact = True
    for trial in range(20):
        kernel, p = specs[trial % len(specs)]
        n = int(gen.integers(3, 9))
        grid = gen.uniform(0.0, 3.0, size=(n, p))
        mean = MeanFunction.constant(gen.standard_normal(2))
        mgp = MultivariateGP(mean, kernel, lam)
        k = int(gen.integers(1, n))
        sub = np.sort(gen.choice(n, size=k, replace=False))
        order = np.concatenate([sub, np.setdiff1d(np.arange(n), sub)])
        law = matnorm.permute(process.finite_dim(mgp, grid), rows=order)
        marg = matnorm.marginal(law, AxisPartition(Axis.ROWS, k), Block.FIRST)
        direct = process.finite_dim(mgp, grid[sub])
        exact &= (
            np.array_equal(marg.mean, direct.mean)
            and np.array_equal(marg.row_cov, direct.row_cov)
            and np.array_equal(marg.col_cov, direct.col_cov)
        )
    return exact, {"instances": 20}


@_timed("stationarity", 1.0)
def check_stationarity(seed):
    """SE + constant mean is stationary under shifts; a min-kernel process is not."""
    mgp = MultivariateGP(MeanFunction.constant([0.3, -1.0]), KernelSpec.squared_exponential(1.5, 0.7), np.eye(2))
    grid = [0.0, 0.4, 1.1, 2.5]
    shifts = [0.7, -1.3, 2.0, 10.0, 0.05]
    se_ok = all(process.is_strictly_stationary(mgp, grid, h, tol=1e-12).stationary for h in shifts)
    bm = brownian.pre_bm_process(2, np.eye(2))
    res = process.is_strictly_stationary(bm, [1.0, 2.0], 1.0, tol=1e-12)
    w = res.witness or {}
    witness_ok = (
        not res.stationary
        and w.get("parameter") == "row_cov"
        and w.get("index") == (0, 0)
        and w.get("original") == 1.0
        and w.get("shifted") == 2.0
    )
    return se_ok and witness_ok, {"se_stationary": se_ok, "min_witness": w}


@_timed("independence", 30.0)
def check_independence(seed):
    """Cross-component trace statistics for diagonal and correlated parameter matrices."""
    details, passed = {}, True
    diag = MultivariateGP(MeanFunction.zero(2), KernelSpec.squared_exponential(1.0, 1.0), np.diag([2.0, 3.0]))
    comps = process.independent_components(diag)
    passed &= comps is not None and [c.scale for c in comps] == [2.0, 3.0]
    ens = process.sample_paths(diag, [0.0, 0.5, 1.0], 100_000, seed * 100 + 60)
    cc = process.cross_covariance(ens, 0, 1)
    z0 = abs(cc.trace) / cc.trace_stderr
    details["diagonal_trace_z"] = z0
    passed &= z0 <= Z_LIMIT

    lam = np.array([[1.0, 0.5], [0.5, 1.0]])
    corr = MultivariateGP(MeanFunction.zero(2), KernelSpec.min(), lam)
    passed &= process.independent_components(corr) is None
    ens = process.sample_paths(corr, [1.0, 2.0, 3.0], 100_000, seed * 100 + 61)
    cc = process.cross_covariance(ens, 0, 1)
    z1 = abs(cc.trace - 3.0) / cc.trace_stderr
    details["correlated_trace"] = cc.trace
    details["correlated_trace_z"] = z1
    passed &= z1 <= Z_LIMIT
    return passed, details


def _two_sample_z(a: np.ndarray, b: np.ndarray) -> float:
    """Max |mean difference| / combined SE of per-draw statistics (axis 0)."""
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    se = np.sqrt(a.var(axis=0, ddof=1) / a.shape[0] + b.var(axis=0, ddof=1) / b.shape[0])
    diff = np.abs(ma - mb)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff == 0, 0.0, np.inf))
    return float(np.max(z))


def path_moment_stats(draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw first moments and unique second moments of the row-stacked path."""
    flat = draws.reshape(draws.shape[0], -1)
    iu = np.triu_indices(flat.shape[1])
    return flat, (flat[:, :, None] * flat[:, None, :])[:, iu[0], iu[1]]


@_timed("brownian", 60.0)
def check_brownian(seed):
    """Zero start, second moments, increments, independence and method agreement."""
    details, passed = {}, True
    count = 100_000
    lam = np.array([[1.0, 0.5], [0.5, 1.0]])

    zero = brownian.simulate(BrownianConfig([0.0, 1.0], lam, 1000, seed * 100 + 70), Method.INCREMENTAL_WALK)
    zero_j = brownian.simulate(BrownianConfig([0.0, 1.0], lam, 1000, seed * 100 + 70), Method.CHOLESKY_JOINT)
    bitwise = all(
        np.all(e.draws[:, 0] == 0.0) and not np.any(np.signbit(e.draws[:, 0])) for e in (zero, zero_j)
    )
    details["zero_start_bitwise"] = bitwise
    passed &= bitwise

    eye_cfg = BrownianConfig([1.0, 2.0, 4.0], np.eye(2), count, seed * 100 + 71)
    ens = brownian.simulate(eye_cfg, Method.CHOLESKY_JOINT)
    rel = 0.0
    for i, t in enumerate(eye_cfg.times):
        b = ens.draws[:, i, :]
        emp = b.T @ b / count
        rel = max(rel, float(np.max(np.abs(emp - t * np.eye(2))) / t))
    details["second_moment_rel_error"] = rel
    passed &= rel <= 0.02

    cfg = BrownianConfig([1.0, 2.0, 4.0], lam, count, seed * 100 + 72)
    joint = brownian.simulate(cfg, Method.CHOLESKY_JOINT)
    walk = brownian.simulate(cfg, Method.INCREMENTAL_WALK)
    report = brownian.increment_report(joint, lam, [(0, 2), (0, 1), (1, 2)])
    details["increment_maxz"] = max(s.max_z for s in report.increments)
    details["cross_maxz"] = max(s.max_z for s in [*report.cross, *report.cross_trace])
    passed &= report.passed(Z_LIMIT)

    f1, s1 = path_moment_stats(joint.draws)
    f2, s2 = path_moment_stats(walk.draws)
    agree = max(_two_sample_z(f1, f2), _two_sample_z(s1, s2))
    details["method_agreement_maxz"] = agree
    passed &= agree <= Z_LIMIT
    return passed, details


def scalar_gpr_mean(k_train: np.ndarray, k_cross: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Textbook single-output GP predictive mean via a dense solve."""
    return k_cross @ np.linalg.solve(k_train, y)


@_timed("regression", 10.0)
def check_regression(seed):
    """Interpolation, conditioning equivalence, independence reduction, Lambda-hat and vec covariance."""
    gen = np.random.default_rng([seed, 8])
    details = {}

    # (a) noise-free interpolation at the training inputs
    interp = 0.0
    for x in ([[0.3]], [[0.0], [1.5], [3.0], [4.5]]):
        x = np.asarray(x)
        y = gen.standard_normal((x.shape[0], 2))
        model = MvgprModel(KernelSpec.squared_exponential(1.0, 0.4), np.array([[1.0, 0.0], [0.3, 0.8]]), TrainingSet(x, y))
        pred = mvgpr.predict(model, x)
        interp = max(interp, np.max(np.abs(pred.mean - y)), np.max(np.abs(pred.row_cov)))
    details["interpolation_error"] = interp

    cond_err = indep_err = 0.0
    lam_bitwise = kron_ok = True
    for _ in range(10):
        n, m, p, d = (int(v) for v in gen.integers(2, 6, size=4))
        x = gen.uniform(0, 3, size=(n, p))
        xs = gen.uniform(0, 3, size=(m, p))
        y = gen.standard_normal((n, d))
        phi = np.tril(gen.standard_normal((d, d)))
        np.fill_diagonal(phi, np.abs(np.diag(phi)) + 0.3)
        phi[0, 0] = 1.0
        kernel = KernelSpec.squared_exponential(gen.uniform(0.5, 2), gen.uniform(0.5, 2, size=p), gen.uniform(0.01, 0.5))
        model = MvgprModel(kernel, phi, TrainingSet(x, y))
        pred = mvgpr.predict(model, xs)

        # (b) against conditioning the joint (train, test) law
        joint = MatrixNormal(np.zeros((n + m, d)), kernels.noisy_gram(kernel, np.vstack([x, xs])), model.lam)
        cond = matnorm.condition(joint, AxisPartition(Axis.ROWS, n), y)
        cond_err = max(cond_err, np.max(np.abs(cond.mean - pred.mean)), np.max(np.abs(cond.row_cov - pred.row_cov)))

        # (d)
        lam_bitwise &= np.array_equal(pred.col_cov, model.lam)

        # (e)
        kron_ok &= np.array_equal(mvgpr.predictive_vec_cov(pred), kron_loop(pred.row_cov, pred.col_cov))

        # (c) diagonal Lambda reduces to independent scalar regressions
        diag_phi = np.diag(np.concatenate([[1.0], gen.uniform(0.5, 2.0, size=d - 1)]))
        dmodel = MvgprModel(kernel, diag_phi, TrainingSet(x, y))
        dpred = mvgpr.predict(dmodel, xs)
        k_train = np.array([[kernels.evaluate(kernel, a, b) for b in x] for a in x]) + kernel.noise_variance * np.eye(n)
        k_cross = np.array([[kernels.evaluate(kernel, a, b) for b in x] for a in xs])
        for j in range(d):
            indep_err = max(indep_err, np.max(np.abs(dpred.mean[:, j] - scalar_gpr_mean(k_train, k_cross, y[:, j]))))

    details.update(
        conditioning_error=cond_err, independence_error=indep_err, lambda_bitwise=lam_bitwise, kron_exact=kron_ok
    )
    passed = interp <= 1e-10 and cond_err <= 1e-8 and indep_err <= 1e-8 and lam_bitwise and kron_ok
    return passed, details


def random_model(gen: np.random.Generator, n: int, d: int, p: int = 1, family: str = "se") -> MvgprModel:
    x = gen.uniform(0, 3, size=(n, p))
    y = gen.standard_normal((n, d))
    if family == "linear":
        kernel = KernelSpec.linear(gen.uniform(0.2, 2), gen.uniform(0.2, 2), gen.uniform(0.05, 0.5))
    elif family == "min":
        kernel = KernelSpec.min(gen.uniform(0.05, 0.5))
    else:
        kernel = KernelSpec.squared_exponential(gen.uniform(0.5, 2), gen.uniform(0.5, 2, size=p), gen.uniform(0.05, 0.5))
    phi = np.tril(0.5 * gen.standard_normal((d, d)))
    np.fill_diagonal(phi, gen.uniform(0.5, 1.5, size=d))
    phi[0, 0] = 1.0
    return MvgprModel(kernel, phi, TrainingSet(x, y))


def finite_difference_grad(model: MvgprModel, step: float = 1e-6) -> np.ndarray:
    theta = model.parameters()
    out = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        out[i] = (mvgpr.nll(model.with_parameters(theta + e)) - mvgpr.nll(model.with_parameters(theta - e))) / (2 * step)
    return out


GRAD_RTOL = 1e-5
GRAD_FLOOR = 1e-3


def gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max over coordinates of ``|a - n| / max(|n|, GRAD_FLOOR)``."""
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), GRAD_FLOOR), initial=0.0))


@_timed("likelihood", 20.0)
def check_likelihood(seed):
    """nll against the vec oracle, analytic gradient against central differences, scale gauge."""
    gen = np.random.default_rng([seed, 9])
    vec_err = grad_err = gauge_err = 0.0
    families = ["se", "se", "linear", "min"]
    for trial in range(20):
        n, d = int(gen.integers(2, 7)), int(gen.integers(1, 7))
        family = families[trial % len(families)]
        model = random_model(gen, n, d, p=1 if family == "min" else int(gen.integers(1, 3)), family=family)
        value = mvgpr.nll(model)
        ref = stats.multivariate_normal(np.zeros(n * d), np.kron(model.lam, model.train_cov)).logpdf(vec(model.data.Y))
        vec_err = max(vec_err, abs(value + ref))
        grad_err = max(grad_err, gradient_error(mvgpr.nll_grad(model), finite_difference_grad(model)))
        c = 3.7
        scaled = MatrixNormal(np.zeros((n, d)), c * model.train_cov, model.lam / c)
        gauge_err = max(gauge_err, abs(value + matnorm.log_density(scaled, model.data.Y)))
    passed = vec_err <= 1e-9 and grad_err <= GRAD_RTOL and gauge_err <= 1e-9
    return passed, {"vec_error": vec_err, "gradient_rel_error": grad_err, "gauge_error": gauge_err}


def synthetic_data(seed: int, n: int = 200, corr: float = 0.8, length_scale: float = 1.0, noise_sd: float = 0.1):
    """Draw ``Y ~ MN(0, K'(X, X), Lambda)`` with unit marginal variances and correlation ``corr``."""
    gen = np.random.default_rng([seed, 10])
    x = np.sort(gen.uniform(0.0, 10.0, size=n))[:, None]
    kernel = KernelSpec.squared_exponential(1.0, length_scale, noise_sd**2)
    lam = np.array([[1.0, corr], [corr, 1.0]])
    y = matnorm.sample(MatrixNormal(np.zeros((n, 2)), kernels.noisy_gram(kernel, x), lam), 1, seed * 100 + 10)[0]
    return TrainingSet(x, y), kernel, lam


@_timed("recovery", 120.0)
def check_recovery(seed):
    """Fit on synthetic data recovers the output correlation and the length scale."""
    data, kernel, lam = synthetic_data(seed)
    model, report = mvgpr.fit(data, "se", FitConfig(max_iterations=200, restarts=5, seed=seed))
    fl = model.lam
    corr = float(fl[0, 1] / np.sqrt(fl[0, 0] * fl[1, 1]))
    log_ell = float(np.log(model.kernel.hyperparams["length_scale"][0]))
    truth = float(np.log(kernel.hyperparams["length_scale"][0]))
    passed = abs(corr - 0.8) <= 0.1 and abs(log_ell - truth) <= 0.3
    return passed, {"correlation": corr, "log_length_scale_error": log_ell - truth, "nll": mvgpr.nll(model)}


CHECKS = [
    check_vec_equivalence,
    check_conditioning,
    check_process_moments,
    check_consistency,
    check_stationarity,
    check_independence,
    check_brownian,
    check_regression,
    check_likelihood,
    check_recovery,
]


def run_checks(seed: int = 0, only=None) -> list[CheckResult]:
    selected = [c for c in CHECKS if only is None or c.check_name in only]
    if only is not None:
        unknown = set(only) - {c.check_name for c in CHECKS}
        if unknown:
            raise ValueError(f"unknown checks: {', '.join(sorted(unknown))}")
    return [c(seed) for c in selected]
