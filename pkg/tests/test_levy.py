import numpy as np
import pytest
from scipy import stats

from mcarlab.errors import ConfigurationError, InvalidArgumentError
from mcarlab.grid import Partition, coarsen, power_partition, uniform_partition
from mcarlab.levy import (
    ConstantSize,
    GaussianSize,
    JumpSpec,
    LevyTriplet,
    UniformSize,
    decompose_jumps,
    sample_levy_increments,
    stream_seed,
)

CP = JumpSpec.compound_poisson(1.0, GaussianSize(0.0, 1.0))


def _check_total(inc):
    np.testing.assert_allclose(
        inc.total, inc.drift + inc.brownian + inc.big_jumps + inc.small_jumps, atol=1e-12
    )


def test_no_jumps_means_zero_jump_fields():
    inc = sample_levy_increments(LevyTriplet(0.0, 1.0), power_partition(2, 3), 1)
    assert np.all(inc.big_jumps == 0) and np.all(inc.small_jumps == 0)
    _check_total(inc)
    assert inc.total.shape == (16, 1)


def test_non_pd_sigma_is_configuration_error():
    with pytest.raises(ConfigurationError):
        LevyTriplet([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ConfigurationError):
        LevyTriplet(0.0, 0.0)


def test_compound_poisson_counts():
    tr = LevyTriplet(0.0, 1.0, CP)
    P = uniform_partition(8.0, 16)
    counts = [sample_levy_increments(tr, P, stream_seed(7, r)).event_times.size for r in range(2000)]
    assert abs(np.mean(counts) - 8.0) <= 3 * np.sqrt(8.0 / 2000)


def test_gamma_sum_matches_gamma_law():
    tr = LevyTriplet(0.0, 1.0, JumpSpec.gamma(1.0, 1.0))
    t = 3.0
    P = uniform_partition(t, 12)
    sums = np.array([sample_levy_increments(tr, P, stream_seed(11, r)).jump_sum.sum() for r in range(2000)])
    ks = stats.kstest(sums, stats.gamma(a=t).cdf)
    crit = 1.63 / np.sqrt(sums.size)  # 1% two-sided critical value
    assert ks.statistic < crit


def test_gamma_big_jump_extraction_is_consistent():
    tr = LevyTriplet(0.0, 1.0, JumpSpec.gamma(1.0, 1.0))
    P = uniform_partition(50.0, 200)
    inc = sample_levy_increments(tr, P, 3)
    assert np.all(inc.event_sizes > 1.0)
    big, _, _ = decompose_jumps(inc.event_times, inc.event_sizes, P)
    np.testing.assert_allclose(big, inc.big_jumps, atol=1e-12)
    assert np.all(inc.jump_sum - inc.big_jumps >= -1e-12)
    _check_total(inc)


def test_gamma_big_jump_rate():
    tr = LevyTriplet(0.0, 1.0, JumpSpec.gamma(1.0, 1.0))
    P = uniform_partition(40.0, 160)
    from scipy.special import exp1

    counts = [sample_levy_increments(tr, P, stream_seed(5, r)).event_times.size for r in range(200)]
    expected = 40.0 * exp1(1.0)
    assert abs(np.mean(counts) - expected) < 4 * np.sqrt(expected / 200)


def test_symmetric_gamma_is_centered_with_zero_compensator():
    tr = LevyTriplet(0.0, 1.0, JumpSpec.symmetric_gamma(1.0, 1.0))
    assert np.all(tr.compensator == 0)
    P = uniform_partition(2.0, 8)
    sums = np.array([sample_levy_increments(tr, P, r).jump_sum.sum() for r in range(2000)])
    # difference of two Gamma(2, 1): mean 0, variance 4
    assert abs(sums.mean()) < 4 * np.sqrt(4 / 2000)
    assert sums.var() == pytest.approx(4.0, rel=0.15)


def test_decompose_single_jumps():
    P = Partition([0.0, 1.0, 2.0])
    big, small, raw = decompose_jumps([0.5], [[2.0]], P)
    np.testing.assert_array_equal(big, [[2.0], [0.0]])
    np.testing.assert_array_equal(small, 0.0)
    comp = JumpSpec.compound_poisson(1.0, GaussianSize(0.0, 1.0)).small_jump_drift(1)
    big, small, raw = decompose_jumps([1.5], [[0.5]], P, compensator=comp)
    np.testing.assert_array_equal(big, 0.0)
    np.testing.assert_array_equal(small, [[0.0], [0.5]])


def test_decompose_rejects_events_outside_span():
    with pytest.raises(InvalidArgumentError):
        decompose_jumps([2.5], [[1.0]], Partition([0.0, 1.0, 2.0]))


def test_reconstruction_identity_compound_poisson():
    tr = LevyTriplet(0.0, 1.0, JumpSpec.compound_poisson(1.0, GaussianSize(0.3, 1.0)))
    P = uniform_partition(20.0, 80)
    inc = sample_levy_increments(tr, P, 9)
    big, small, raw = decompose_jumps(inc.event_times, inc.event_sizes, P, tr.compensator)
    np.testing.assert_allclose(big + small + np.outer(P.steps, tr.compensator), inc.jump_sum, atol=1e-12)
    _check_total(inc)
    np.testing.assert_allclose(inc.compensated_drift() + inc.brownian + inc.jump_sum, inc.total, atol=1e-12)


def test_small_jump_means_closed_form_vs_quadrature():
    g = GaussianSize(0.4, 0.5)
    x = np.linspace(-1, 1, 200001)
    dens = stats.norm(0.4, np.sqrt(0.5)).pdf(x)
    assert g.small_mean(1)[0] == pytest.approx(np.trapezoid(x * dens, x), abs=1e-8)
    assert UniformSize(-0.5, 2.0).small_mean(1)[0] == pytest.approx((1 - 0.25) / 2 / 2.5)
    np.testing.assert_array_equal(ConstantSize(0.5).small_mean(1), [0.5])
    np.testing.assert_array_equal(ConstantSize(1.5).small_mean(1), [0.0])
    assert JumpSpec.gamma(2.0, 0.5).small_jump_drift(1)[0] == pytest.approx(2 * 0.5 * (1 - np.exp(-2)))


def test_vector_small_jump_mean_by_qmc():
    m = GaussianSize(0.2, 0.25).small_mean(2)
    rng = np.random.default_rng(0)
    x = 0.2 + 0.5 * rng.standard_normal((400000, 2))
    ref = (x * (np.linalg.norm(x, axis=1) <= 1)[:, None]).mean(axis=0)
    np.testing.assert_allclose(m, ref, atol=3e-3)


def test_determinism():
    tr = LevyTriplet([0.1, 0.0], np.eye(2), CP)
    P = power_partition(3, 2)
    a = sample_levy_increments(tr, P, 42)
    b = sample_levy_increments(tr, P, 42)
    for f in ("total", "brownian", "big_jumps", "small_jumps", "event_times"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_brownian_aggregates_into_coarse_grid():
    tr = LevyTriplet(0.0, 1.0, CP)
    P = power_partition(4, 2)
    Q = coarsen(P, 4)
    inc = sample_levy_increments(tr, P, 1)
    agg = inc.aggregate(Q.fine_index)
    np.testing.assert_allclose(agg.brownian.sum(axis=0), inc.brownian.sum(axis=0))
    np.testing.assert_allclose(agg.total[0], inc.total[:4].sum(axis=0))
    assert agg.n_intervals == Q.n_intervals


def test_brownian_covariance_recovers_sigma():
    Sigma = np.array([[1.0, 0.3], [0.3, 0.5]])
    P = uniform_partition(1000.0, 100000)
    inc = sample_levy_increments(LevyTriplet([0.0, 0.0], Sigma), P, 2)
    emp = inc.brownian.T @ inc.brownian / 1000.0
    assert np.linalg.norm(emp - Sigma) / np.linalg.norm(Sigma) < 0.1


def test_b_tilde_subtracts_compensator():
    tr = LevyTriplet(0.5, 1.0, JumpSpec.compound_poisson(2.0, ConstantSize(0.5)))
    assert tr.b_tilde[0] == pytest.approx(0.5 - 2.0 * 0.5)


def test_jumpspec_roundtrip():
    for spec in (CP, JumpSpec.gamma(2.0, 0.5), JumpSpec.symmetric_gamma(), JumpSpec.none(),
                 JumpSpec.compound_poisson(0.5, UniformSize(-2, 1)), JumpSpec.compound_poisson(1, ConstantSize(2.0))):
        again = JumpSpec.from_dict(spec.to_dict())
        assert again.to_dict() == spec.to_dict()
    with pytest.raises(ConfigurationError):
        JumpSpec.from_dict({"type": "stable"})
