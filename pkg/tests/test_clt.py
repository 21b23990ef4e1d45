import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from bmlab.clt import (
    binned_kde,
    calibrate_tv_floor,
    density_tv,
    empirical_variance,
    limiting_variance,
    nnp21_rate,
    partial_sum,
    stein_discrepancy,
    stein_family,
    tv_estimate,
)
from bmlab.errors import EstimationError, RankError, SummabilityWarning
from bmlab.gaussproc import CorrelationModel, PathBatch, simulate, stream
from bmlab.hermite import HermiteExpansion
from bmlab.malliavin import estimate_limits
from bmlab.parser import _parse_function_spec
from reference_data.reference import tv_floor_copy

H1 = HermiteExpansion.from_coefficients([0.0, 1.0])
H2 = HermiteExpansion.from_coefficients([0.0, 0.0, 1.0])
KRONECKER = CorrelationModel.kronecker()
GEOM = CorrelationModel.geometric(0.5)


@pytest.fixture(scope="module")
def gaussian_draws():
    return stream(2024, 0, 0).standard_normal(100_000)


def test_partial_sum_of_a_fixture():
    batch = PathBatch.from_arrays(np.array([[1.0, -1.0, 2.0, 0.0]]))
    sample = partial_sum(H2, batch)
    assert_allclose(sample.values, [1.0])
    assert not sample.normalized


def test_partial_sum_rejects_constants():
    batch = PathBatch.from_arrays(np.zeros((2, 4)))
    with pytest.raises(RankError):
        partial_sum(HermiteExpansion.from_coefficients([1.0, 1.0]), batch)


def test_partial_sum_is_linear():
    batch = simulate(GEOM, 32, 50, seed=0)
    assert_allclose(
        partial_sum(H2.scaled(2.0), batch).values, 2.0 * partial_sum(H2, batch).values, rtol=1e-14
    )


def test_partial_sum_of_abs_centered_uses_the_function_itself():
    f = _parse_function_spec("abs-centered")
    batch = simulate(GEOM, 256, 40, seed=11)
    expected = np.sum(np.abs(batch.data) - math.sqrt(2.0 / math.pi), axis=1) / 16.0
    assert_allclose(partial_sum(f, batch).values, expected, rtol=1e-10, atol=1e-9)


def test_normalized_partial_sum():
    batch = simulate(GEOM, 32, 500, seed=0)
    sample = partial_sum(H2, batch, normalized=True)
    assert sample.normalized
    assert_allclose(np.std(sample.values, ddof=1), 1.0)
    v = empirical_variance(sample)
    assert_allclose(v.var, sample.scale**2)


def test_normalizing_a_degenerate_sample():
    with pytest.raises(EstimationError):
        partial_sum(H1, PathBatch.from_arrays(np.ones((3, 4))), normalized=True)


def test_h1_on_kronecker_is_standard_gaussian():
    M = 4000
    batch = simulate(KRONECKER, 64, M, seed=5)
    v = empirical_variance(partial_sum(H1, batch))
    assert abs(v.var - 1.0) < 4.0 * math.sqrt(2.0 / M)
    lo, hi = v.ci
    assert lo < v.var < hi


@pytest.mark.parametrize(
    "f, model, sigma2",
    [
        (H1, KRONECKER, 1.0),
        (H1, GEOM, 3.0),
        (H2, GEOM, 10.0 / 3.0),
        (H2, KRONECKER, 2.0),
    ],
)
def test_limiting_variance_closed_forms(f, model, sigma2):
    report = limiting_variance(f, model)
    assert_allclose(report.sigma2, sigma2, rtol=1e-9)
    assert not report.degenerate


def test_limiting_variance_of_h1_plus_h3():
    f = HermiteExpansion.from_coefficients([0.0, 1.0, 0.0, 1.0])
    # 1 * 3 + 3! * (1 + 2 * 0.125 / 0.875)
    assert_allclose(limiting_variance(f, GEOM).sigma2, 3.0 + 6.0 * (1.0 + 0.25 / 0.875), rtol=1e-12)


def test_limiting_variance_reports_its_truncation():
    report = limiting_variance(H2, CorrelationModel.polynomial(1.5), k_lag=1000)
    assert report.k_lag == 1000
    assert_allclose(report.lag_tail, 1001.0**-3.0)
    assert report.order_tail > 0.0
    assert report.summability.converged


def test_limiting_variance_warns_on_long_memory():
    with pytest.warns(SummabilityWarning):
        report = limiting_variance(H2, CorrelationModel.polynomial(0.4), k_lag=1000)
    assert report.sigma2 > 0.0


def test_degenerate_limiting_variance():
    # sum_k rho(k) = 1 - 2 * 0.5 = 0
    report = limiting_variance(H1, CorrelationModel.table([1.0, -0.5]))
    assert report.degenerate
    assert report.sigma2 == 0.0


def test_tv_of_the_reference_with_itself():
    edges = np.linspace(-8.0, 8.0, 4097)
    grid = 0.5 * (edges[1:] + edges[:-1])
    phi = stats.norm.pdf(grid)
    assert density_tv(phi, phi, edges[1] - edges[0]) == 0.0


def test_binned_kde_integrates_to_one(gaussian_draws):
    edges = np.linspace(-8.0, 8.0, 4097)
    density = binned_kde(gaussian_draws, edges, 0.1)
    assert_allclose(np.sum(density) * (edges[1] - edges[0]), 1.0, atol=1e-6)


def test_tv_of_gaussian_draws(gaussian_draws):
    report = tv_estimate(gaussian_draws)
    assert report.tv <= 0.02
    assert report.kolmogorov < 0.01


def test_tv_against_a_shifted_law(gaussian_draws):
    report = tv_estimate(gaussian_draws + 1.0)
    assert abs(report.tv - (2.0 * stats.norm.cdf(0.5) - 1.0)) < 0.02


def test_tv_against_a_non_standard_reference(gaussian_draws):
    report = tv_estimate(2.0 * gaussian_draws + 1.0, mean=1.0, var=4.0)
    assert report.tv <= 0.02


def test_tv_is_monotone_in_the_shift(gaussian_draws):
    tv = [tv_estimate(gaussian_draws, mean=shift).tv for shift in (0.0, 0.5, 1.0)]
    assert tv[0] < tv[1] < tv[2]


def test_tv_of_a_degenerate_sample():
    with pytest.raises(EstimationError):
        tv_estimate(np.ones(1000))


def test_tv_needs_enough_draws(gaussian_draws):
    with pytest.raises(EstimationError, match="499 draws"):
        tv_estimate(gaussian_draws[:499])


def test_kolmogorov_does_not_exceed_tv():
    batch = simulate(GEOM, 16, 2000, seed=3)
    report = tv_estimate(partial_sum(H2, batch, normalized=True))
    assert report.kolmogorov <= report.tv + 0.03


def test_calibrated_floor():
    floor = calibrate_tv_floor(2000, seed=1, repeats=3)
    assert 0.0 < floor.floor < 0.1
    assert floor.M == 2000


def test_calibrated_floor_has_its_own_streams():
    floor = calibrate_tv_floor(1000, seed=5, repeats=1, normalized=False)
    own = stream(5, 0, tv_floor_copy).standard_normal(1000)
    assert floor.floor == tv_estimate(own).tv
    path = simulate(KRONECKER, 1000, 1, seed=5).data[0]
    assert not np.array_equal(own, path)


def test_nnp21_rate_on_kronecker():
    assert_allclose(nnp21_rate(KRONECKER, 100), 0.2)
    assert_allclose(nnp21_rate(KRONECKER, 400), 0.1)


def test_nnp21_rate_on_geometric():
    n = 10_000
    k = np.arange(1, n + 1)
    second = 1.0 + 2.0 * np.sum(2.0 ** (-4.0 * k / 3.0))
    expected = (math.sqrt(3.0) + second**1.5) / 100.0
    assert_allclose(nnp21_rate(GEOM, n), expected, rtol=1e-10)


def test_stein_family():
    family = stein_family()
    assert len(family) == 9
    x = np.linspace(-3.0, 3.0, 7)
    h = 1e-6
    for name, phi, dphi in family:
        assert_allclose((phi(x + h) - phi(x - h)) / (2 * h), dphi(x), atol=1e-6, err_msg=name)


def test_stein_discrepancy_of_gaussian_draws(gaussian_draws):
    report = stein_discrepancy(gaussian_draws, 1.0)
    for row in report.rows:
        assert abs(row["value"]) < 4.0 * row["se"], row["phi"]


def test_stein_discrepancy_of_a_scaled_law(gaussian_draws):
    report = stein_discrepancy(2.0 * gaussian_draws, 4.0)
    assert report.max_z < 4.0
    assert stein_discrepancy(2.0 * gaussian_draws, 1.0).max_z > 10.0


def test_stein_discrepancy_with_a_custom_family(gaussian_draws):
    family = [("x", lambda x: x, lambda x: np.ones_like(x))]
    report = stein_discrepancy(gaussian_draws, 1.0, family)
    assert len(report.rows) == 1
    assert report.rows[0]["phi"] == "x"


def test_stein_discrepancy_of_h1_on_kronecker():
    batch = simulate(KRONECKER, 32, 20_000, seed=6)
    report = stein_discrepancy(partial_sum(H1, batch), 1.0)
    assert report.max_z < 4.0


def test_stein_discrepancy_shrinks_with_n():
    # short paths carry the non-Gaussian H_2 shape, long paths much less of it
    short = simulate(KRONECKER, 4, 20_000, seed=7)
    long = simulate(KRONECKER, 1024, 20_000, seed=8)
    f = H2.scaled(1.0 / math.sqrt(2.0))
    d_short = stein_discrepancy(partial_sum(f, short), 1.0)
    d_long = stein_discrepancy(partial_sum(f, long), 1.0)
    assert d_short.discrepancy > d_long.discrepancy + 2.0 * d_short.se


@pytest.mark.slow
def test_variance_acceptance():
    batch = simulate(GEOM, 2**12, 2000, seed=12)
    v = empirical_variance(partial_sum(H2, batch))
    assert abs(v.var - 10.0 / 3.0) < 0.1 * 10.0 / 3.0


@pytest.mark.slow
@pytest.mark.parametrize("spec", ["hermite:2", "coeffs:[0, 1, 0, 1]", "abs-centered"])
def test_tv_trend_acceptance(spec):
    f = _parse_function_spec(spec)
    floor = calibrate_tv_floor(2000, seed=99).floor
    reports = []
    for n in (2**8, 2**10, 2**12):
        batch = simulate(GEOM, n, 2000, seed=n)
        reports.append(tv_estimate(partial_sum(f, batch, normalized=True)))
    tv = [r.tv for r in reports]
    kolmogorov = [r.kolmogorov for r in reports]
    assert tv[-1] < 2.0 * floor
    assert tv[0] > tv[-1]
    # the KS statistic of 2000 draws fluctuates by about 1 / sqrt(2000)
    assert kolmogorov[-1] < kolmogorov[0] + 1.0 / math.sqrt(2000)


@pytest.mark.slow
def test_linear_case_acceptance():
    batch = simulate(KRONECKER, 2**10, 2000, seed=3)
    floor = calibrate_tv_floor(2000, seed=4).floor
    sample = partial_sum(H1, batch, normalized=True)
    assert tv_estimate(sample).tv <= 1.5 * floor
    report = stein_discrepancy(sample, 1.0)
    assert report.max_z < 4.0


@pytest.mark.slow
def test_stein_discrepancy_trend_acceptance():
    reports = []
    for n in (2**8, 2**12):
        batch = simulate(GEOM, n, 2000, seed=n + 7)
        nu = estimate_limits(H2, batch).nu_hat
        reports.append(stein_discrepancy(partial_sum(H2, batch), nu))
    small, large = reports
    assert large.discrepancy < small.discrepancy - 2.0 * small.se
