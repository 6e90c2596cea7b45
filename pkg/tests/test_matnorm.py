import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mvgp import matnorm
from mvgp.checks import gaussian_condition, kron_loop, random_matnorm, random_spd
from mvgp.linalg import (
    DegenerateCovarianceError,
    NotPositiveDefiniteError,
    is_psd,
    jitter_cholesky,
    mvn_log_density,
    vec,
)
from mvgp.matnorm import Axis, AxisPartition, Block, MatrixNormal


def vec_logpdf(mn, x):
    return stats.multivariate_normal(vec(mn.mean), np.kron(mn.col_cov, mn.row_cov)).logpdf(vec(x))


# jitter policy


def test_jitter_not_applied_to_pd_matrix():
    f = jitter_cholesky(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert f.jitter == 0.0


def test_jitter_escalates_on_singular_matrix():
    f = jitter_cholesky(np.ones((3, 3)))
    assert 1e-10 <= f.jitter <= 1e-6


def test_indefinite_matrix_raises():
    with pytest.raises(NotPositiveDefiniteError):
        jitter_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_asymmetric_matrix_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        MatrixNormal(np.zeros((2, 1)), np.array([[1.0, 0.1], [0.0, 1.0]]), [[1.0]])


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        MatrixNormal(np.zeros((2, 2)), np.eye(3), np.eye(2))
    mn = MatrixNormal(np.zeros((2, 2)), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        mn.log_density(np.zeros((2, 3)))


# log_density


def test_log_density_scalar_standard_normal():
    mn = MatrixNormal([[0.0]], [[1.0]], [[1.0]])
    assert mn.log_density([[0.0]]) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-12)
    assert mn.log_density([[0.0]]) == pytest.approx(-0.9189385, abs=1e-7)


def test_log_density_four_iid_normals():
    mn = MatrixNormal(np.zeros((2, 2)), np.eye(2), np.eye(2))
    assert mn.log_density(np.zeros((2, 2))) == pytest.approx(-3.6757541, abs=1e-7)


def test_log_density_bivariate_by_hand():
    mn = MatrixNormal(np.zeros((2, 1)), [[2.0, 1.0], [1.0, 2.0]], [[1.0]])
    expected = -np.log(2 * np.pi) - 0.5 * np.log(3.0)
    assert mn.log_density(np.zeros((2, 1))) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(-2.3871832, abs=1e-7)


def test_log_density_rejects_degenerate_by_default():
    mn = MatrixNormal(np.zeros((2, 1)), np.ones((2, 2)), [[1.0]])
    with pytest.raises(DegenerateCovarianceError):
        mn.log_density(np.zeros((2, 1)))
    assert np.isfinite(mn.log_density(np.zeros((2, 1)), allow_jitter=True))


def test_mvn_log_density_matches_scipy():
    gen = np.random.default_rng(3)
    cov = random_spd(gen, 4)
    x, m = gen.standard_normal(4), gen.standard_normal(4)
    assert mvn_log_density(x, m, cov) == pytest.approx(stats.multivariate_normal(m, cov).logpdf(x), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 5), d=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
def test_vec_equivalence_property(n, d, seed):
    gen = np.random.default_rng(seed)
    mn = random_matnorm(gen, n, d)
    x = gen.standard_normal((n, d))
    assert abs(mn.log_density(x) - vec_logpdf(mn, x)) <= 1e-9


# vec_distribution


def test_vec_distribution_scalar():
    mn = MatrixNormal([[0.0]], [[2.5]], [[4.0]])
    assert matnorm.vec_distribution(mn).cov.tolist() == [[10.0]]


def test_vec_distribution_identity():
    mn = MatrixNormal(np.zeros((2, 3)), np.eye(2), np.eye(3))
    np.testing.assert_array_equal(matnorm.vec_distribution(mn).cov, np.eye(6))


def test_vec_distribution_against_loop_kronecker():
    sigma = np.array([[2.0, 1.0], [1.0, 2.0]])
    lam = np.array([[1.0, 0.5], [0.5, 1.0]])
    mn = MatrixNormal(np.arange(4.0).reshape(2, 2), sigma, lam)
    spec = matnorm.vec_distribution(mn)
    # cov(X[i, j], X[a, b]) = Sigma[i, a] * Lambda[j, b] with vec index i + n j
    expected = np.empty((4, 4))
    for i in range(2):
        for j in range(2):
            for a in range(2):
                for b in range(2):
                    expected[i + 2 * j, a + 2 * b] = sigma[i, a] * lam[j, b]
    np.testing.assert_array_equal(spec.cov, expected)
    np.testing.assert_array_equal(spec.mean, [0.0, 2.0, 1.0, 3.0])


def test_vec_transpose_distribution_is_sigma_kron_lambda():
    gen = np.random.default_rng(5)
    mn = random_matnorm(gen, 3, 2)
    spec = matnorm.vec_transpose_distribution(mn)
    np.testing.assert_array_equal(spec.cov, kron_loop(mn.row_cov, mn.col_cov))
    np.testing.assert_array_equal(spec.mean, mn.mean.reshape(-1))


# sample


def test_sample_mean_converges():
    mn = MatrixNormal(7 * np.ones((2, 2)), np.eye(2), np.eye(2))
    draws = mn.sample(100_000, seed=11)
    assert draws.shape == (100_000, 2, 2)
    assert np.all(np.abs(draws.mean(axis=0) - 7) <= 3 / np.sqrt(100_000))


def test_sample_second_moment():
    mn = MatrixNormal(np.zeros((2, 2)), np.eye(2), np.eye(2))
    draws = mn.sample(100_000, seed=12)
    est = np.einsum("rna,rnb->ab", draws, draws) / (100_000 * 2)
    assert np.all(np.abs(est - np.eye(2)) <= 0.02)


def test_sample_degenerate_covariance():
    v = np.array([1.0, 1.0, 0.0])
    sigma = np.outer(v, v) + np.diag([0.0, 0.0, 1.0])  # zero eigenvalue along (1, -1, 0)
    mn = MatrixNormal(np.zeros((3, 1)), sigma, [[1.0]])
    draws = mn.sample(2000, seed=13)[:, :, 0]
    along_null = draws @ np.array([1.0, -1.0, 0.0]) / np.sqrt(2)
    assert np.std(along_null) < 1e-3
    assert np.std(draws[:, 0]) > 0.5


def test_sample_deterministic():
    gen = np.random.default_rng(0)
    mn = random_matnorm(gen, 3, 2)
    np.testing.assert_array_equal(mn.sample(50, 4), mn.sample(50, 4))
    assert not np.array_equal(mn.sample(50, 4), mn.sample(50, 5))


def test_sample_prefix_stable_across_blocks():
    mn = MatrixNormal(np.zeros((1, 1)), [[1.0]], [[1.0]])
    big = mn.sample(10_000, 2)
    np.testing.assert_array_equal(big[:4096], mn.sample(4096, 2))


# schur_complement


def test_schur_by_hand():
    np.testing.assert_allclose(matnorm.schur_complement([[2.0, 1.0], [1.0, 2.0]], 1), [[1.5]], atol=1e-15)


def test_schur_identity():
    np.testing.assert_array_equal(matnorm.schur_complement(np.eye(4), 2), np.eye(2))


def test_schur_block_diagonal_exact():
    a = np.zeros((4, 4))
    a[:2, :2] = [[2.0, 0.3], [0.3, 1.0]]
    a[2:, 2:] = [[5.0, 1.0], [1.0, 3.0]]
    np.testing.assert_array_equal(matnorm.schur_complement(a, 2), a[2:, 2:])


def test_schur_invalid_split():
    with pytest.raises(ValueError):
        matnorm.schur_complement(np.eye(3), 3)


@settings(max_examples=30, deadline=None)
@given(k=st.integers(2, 6), split=st.integers(1, 5), rank=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_schur_preserves_psd(k, split, rank, seed):
    split = min(split, k - 1)
    gen = np.random.default_rng(seed)
    b = gen.standard_normal((k, min(rank, k)))
    a = b @ b.T + 1e-3 * np.eye(k)
    assert is_psd(matnorm.schur_complement(a, split))


# marginal


def test_marginal_rows_first_row():
    gen = np.random.default_rng(1)
    mn = random_matnorm(gen, 3, 2)
    m = matnorm.marginal(mn, AxisPartition(Axis.ROWS, 1), Block.FIRST)
    np.testing.assert_array_equal(m.mean, mn.mean[:1])
    np.testing.assert_array_equal(m.row_cov, [[mn.row_cov[0, 0]]])
    np.testing.assert_array_equal(m.col_cov, mn.col_cov)


def test_marginal_twice_equals_direct_selection():
    gen = np.random.default_rng(2)
    mn = random_matnorm(gen, 5, 4)
    twice = matnorm.marginal(matnorm.marginal(mn, AxisPartition(Axis.ROWS, 4)), AxisPartition(Axis.COLS, 2))
    np.testing.assert_array_equal(twice.mean, mn.mean[:4, :2])
    np.testing.assert_array_equal(twice.row_cov, mn.row_cov[:4, :4])
    np.testing.assert_array_equal(twice.col_cov, mn.col_cov[:2, :2])
    second = matnorm.marginal(mn, AxisPartition(Axis.COLS, 1), Block.SECOND)
    np.testing.assert_array_equal(second.col_cov, mn.col_cov[1:, 1:])


def test_marginal_density_matches_vec_subvector():
    gen = np.random.default_rng(3)
    mn = random_matnorm(gen, 4, 3)
    x = gen.standard_normal((4, 3))
    full = matnorm.vec_distribution(mn)
    for axis, k in ((Axis.ROWS, 2), (Axis.COLS, 1)):
        m = matnorm.marginal(mn, AxisPartition(axis, k))
        if axis is Axis.ROWS:
            idx = [i + 4 * j for j in range(3) for i in range(k)]
            sub = x[:k]
        else:
            idx = list(range(4 * k))
            sub = x[:, :k]
        ref = stats.multivariate_normal(full.mean[idx], full.cov[np.ix_(idx, idx)]).logpdf(vec(sub))
        assert m.log_density(sub) == pytest.approx(ref, abs=1e-9)


def test_partition_validation():
    mn = MatrixNormal(np.zeros((3, 2)), np.eye(3), np.eye(2))
    with pytest.raises(ValueError):
        matnorm.marginal(mn, AxisPartition(Axis.ROWS, 3))
    with pytest.raises(ValueError):
        AxisPartition(Axis.COLS, 0)


# condition


def test_condition_identity_row_cov_gives_independence():
    gen = np.random.default_rng(4)
    mn = MatrixNormal(gen.standard_normal((3, 2)), np.eye(3), random_spd(gen, 2))
    c = matnorm.condition(mn, AxisPartition(Axis.ROWS, 1), gen.standard_normal((1, 2)))
    np.testing.assert_array_equal(c.mean, mn.mean[1:])
    np.testing.assert_array_equal(c.row_cov, np.eye(2))


def test_condition_scalar_by_hand():
    mn = MatrixNormal(np.zeros((2, 1)), [[2.0, 1.0], [1.0, 2.0]], [[1.0]])
    c = matnorm.condition(mn, AxisPartition(Axis.ROWS, 1), [[1.0]])
    np.testing.assert_allclose(c.mean, [[0.5]], atol=1e-15)
    np.testing.assert_allclose(c.row_cov, [[1.5]], atol=1e-15)


@pytest.mark.parametrize("axis", [Axis.ROWS, Axis.COLS])
def test_condition_matches_vec_gaussian(axis):
    gen = np.random.default_rng(6)
    mn = random_matnorm(gen, 3, 2)
    x = gen.standard_normal((3, 2))
    if axis is Axis.ROWS:
        obs, idx = x[:1], [0, 3]
    else:
        obs, idx = x[:, :1], [0, 1, 2]
    full = matnorm.vec_distribution(mn)
    ref_mean, ref_cov = gaussian_condition(full.mean, full.cov, idx, vec(obs))
    got = matnorm.vec_distribution(matnorm.condition(mn, AxisPartition(axis, 1), obs))
    np.testing.assert_allclose(got.mean, ref_mean, atol=1e-8)
    np.testing.assert_allclose(got.cov, ref_cov, atol=1e-8)


def test_condition_shape_mismatch():
    mn = MatrixNormal(np.zeros((3, 2)), np.eye(3), np.eye(2))
    with pytest.raises(ValueError):
        matnorm.condition(mn, AxisPartition(Axis.ROWS, 1), np.zeros((2, 2)))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 5), d=st.integers(2, 5), seed=st.integers(0, 2**32 - 1), rows=st.booleans())
def test_chain_rule_property(n, d, seed, rows):
    gen = np.random.default_rng(seed)
    mn = random_matnorm(gen, n, d)
    x = gen.standard_normal((n, d))
    axis = Axis.ROWS if rows else Axis.COLS
    k = int(gen.integers(1, n if rows else d))
    part = AxisPartition(axis, k)
    x1, x2 = (x[:k], x[k:]) if rows else (x[:, :k], x[:, k:])
    lhs = mn.log_density(x)
    rhs = matnorm.marginal(mn, part).log_density(x1) + matnorm.condition(mn, part, x1).log_density(x2)
    assert abs(lhs - rhs) <= 1e-8


def test_permute_moves_rows_to_front():
    gen = np.random.default_rng(8)
    mn = random_matnorm(gen, 4, 2)
    p = matnorm.permute(mn, rows=[2, 0, 1, 3])
    np.testing.assert_array_equal(p.mean[0], mn.mean[2])
    assert p.row_cov[0, 1] == mn.row_cov[2, 0]
    with pytest.raises(ValueError):
        matnorm.permute(mn, rows=[0, 0, 1, 2])
