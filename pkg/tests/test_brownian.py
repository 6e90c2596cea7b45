import json

import numpy as np
import pytest

from mvgp import brownian, process
from mvgp.brownian import BrownianConfig, Method

LAM_CORR = np.array([[1.0, 0.5], [0.5, 1.0]])


def test_pre_bm_scalar():
    mgp = brownian.pre_bm_process(1, [[1.0]])
    assert mgp.kernel.family.value == "min"
    assert mgp.output_dim == 1


def test_pre_bm_finite_dim():
    law = process.finite_dim(brownian.pre_bm_process(2, np.eye(2)), [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(law.row_cov, [[1, 1, 1], [1, 2, 2], [1, 2, 3]])
    np.testing.assert_array_equal(law.col_cov, np.eye(2))


def test_pre_bm_three_dim_moments():
    lam = [[1.0, 0.2, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 2.0]]
    mgp = brownian.pre_bm_process(3, lam)
    ens = process.sample_paths(mgp, [0.5, 1.0, 2.0], 200_000, seed=2)
    assert process.check_moments(ens, mgp).passed(3.0)


def test_pre_bm_wrong_shape():
    with pytest.raises(ValueError):
        brownian.pre_bm_process(2, np.eye(3))


@pytest.mark.parametrize("times", [[], [-1.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
def test_config_rejects_bad_times(times):
    with pytest.raises(ValueError):
        BrownianConfig(times, np.eye(1), 10, 0)


@pytest.mark.parametrize("method", list(Method))
def test_origin_is_exactly_zero(method):
    ens = brownian.simulate(BrownianConfig([0.0, 1.0], LAM_CORR, 500, 3), method)
    assert np.all(ens.draws[:, 0, :] == 0.0)
    assert np.all(ens.draws[:, 1, :] != 0.0)


@pytest.mark.parametrize("method", list(Method))
def test_simulation_deterministic(method):
    cfg = BrownianConfig([0.5, 1.0], np.eye(2), 20, 4)
    np.testing.assert_array_equal(brownian.simulate(cfg, method).draws, brownian.simulate(cfg, method).draws)


def test_second_moment_within_two_percent():
    times = [1.0, 2.0, 4.0]
    ens = brownian.simulate(BrownianConfig(times, np.eye(2), 100_000, 5))
    for i, t in enumerate(times):
        b = ens.draws[:, i, :]
        est = b.T @ b / b.shape[0]
        assert np.max(np.abs(est - t * np.eye(2))) <= 0.02 * t


@pytest.mark.parametrize("method", list(Method))
def test_each_method_matches_exact_second_moment(method):
    times = np.array([0.5, 1.0, 2.0])
    draws = brownian.simulate(BrownianConfig(times, LAM_CORR, 100_000, 6), method).draws
    outer = np.einsum("rna,rnb->rnab", draws, draws)
    _, _, z = process.mc_zscores(outer, times[:, None, None] * LAM_CORR)
    assert z.max() <= 3.0
    _, _, z = process.mc_zscores(draws, np.zeros(draws.shape[1:]))
    assert z.max() <= 3.0


def test_degenerate_interval():
    ens = brownian.simulate(BrownianConfig([1.0, 2.0], LAM_CORR, 100, 0))
    report = brownian.increment_report(ens, LAM_CORR, [(1, 1)])
    stat = report.increments[0]
    np.testing.assert_array_equal(stat.target, np.zeros((2, 2)))
    np.testing.assert_array_equal(stat.estimate, np.zeros((2, 2)))
    assert report.cross == []


def test_increment_second_moment():
    ens = brownian.simulate(BrownianConfig([1.0, 2.0, 4.0], LAM_CORR, 100_000, 8))
    report = brownian.increment_report(ens, LAM_CORR, [(0, 2)])
    stat = report.increments[0]
    np.testing.assert_array_equal(stat.target, 3.0 * LAM_CORR)
    assert stat.max_z <= 3.0
    assert report.row_form is None


def test_disjoint_increments_uncorrelated():
    ens = brownian.simulate(BrownianConfig([1.0, 2.0, 4.0], np.eye(2), 100_000, 9))
    report = brownian.increment_report(ens, np.eye(2), [(0, 1), (1, 2)])
    assert len(report.cross) == 1 and len(report.cross_trace) == 1
    assert report.cross_trace[0].max_z <= 3.0
    assert [s.target for s in report.row_form] == [2.0, 4.0]
    assert report.passed(3.0)


def test_overlapping_intervals_skip_cross():
    ens = brownian.simulate(BrownianConfig([1.0, 2.0, 4.0], np.eye(1), 50, 0))
    report = brownian.increment_report(ens, np.eye(1), [(0, 2), (1, 2)])
    assert report.cross == []


def test_interval_off_grid():
    ens = brownian.simulate(BrownianConfig([1.0, 2.0], np.eye(1), 5, 0))
    with pytest.raises(ValueError, match="grid"):
        brownian.increment_report(ens, np.eye(1), [(0, 5)])


def test_default_intervals():
    assert brownian.default_intervals(3) == [(0, 1), (1, 2), (0, 2)]
    assert brownian.default_intervals(2) == [(0, 1)]


def test_report_files(tmp_path):
    ens = brownian.simulate(BrownianConfig([1.0, 2.0, 4.0], np.eye(2), 200, 1))
    report = brownian.increment_report(ens, np.eye(2), brownian.default_intervals(3))
    report.write_json(tmp_path / "r.json")
    report.write_csv(tmp_path / "r.csv")
    payload = json.loads((tmp_path / "r.json").read_text())
    assert payload["max_z"] == report.max_z
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "interval,entry,target,empirical,stderr"


def test_increment_second_moment_scales_linearly():
    times = [0.0, 0.5, 1.5, 3.5, 7.5]
    ens = brownian.simulate(BrownianConfig(times, LAM_CORR, 100_000, 10))
    report = brownian.increment_report(ens, LAM_CORR, [(0, 1), (1, 2), (2, 3), (3, 4)])
    lengths = np.array([b - a for a, b in (s.interval for s in report.increments)])
    np.testing.assert_array_equal(lengths, [0.5, 1.0, 2.0, 4.0])
    est = np.stack([s.estimate for s in report.increments])
    slope = np.einsum("k,kab->ab", lengths, est) / np.dot(lengths, lengths)
    assert np.all(np.abs(slope - LAM_CORR) <= 0.05 * np.abs(LAM_CORR))
