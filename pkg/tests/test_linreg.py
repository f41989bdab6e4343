import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mfpkit.errors import DegenerateFit, MismatchedFits, RankDeficient
from mfpkit.linreg import (
    chisq_quantile,
    chisq_sf,
    deviance,
    deviance_difference,
    fit_ols,
    gamma_q,
)


def _design(rng, n, k):
    return np.column_stack([np.ones(n), rng.normal(size=(n, k))])


def test_intercept_only():
    y = np.array([1.0, 2.0, 4.0, 7.0])
    fit = fit_ols(np.ones((4, 1)), y)
    assert fit.coefficients[0] == pytest.approx(y.mean())
    assert fit.rss == pytest.approx(np.sum((y - y.mean()) ** 2))
    assert fit.r2 == pytest.approx(0.0, abs=1e-15)


def test_exact_fit_is_degenerate():
    x = np.arange(10.0)
    with pytest.raises(DegenerateFit):
        fit_ols(np.column_stack([np.ones(10), x]), 3 * x + 1)
    flagged = fit_ols(np.column_stack([np.ones(10), x]), 3 * x + 1, check_degenerate=False)
    assert flagged.degenerate


def test_rank_deficient_names_column():
    rng = np.random.default_rng(0)
    x = rng.normal(size=20)
    X = np.column_stack([np.ones(20), x, 2 * x])
    with pytest.raises(RankDeficient) as err:
        fit_ols(X, rng.normal(size=20))
    assert err.value.columns == [2]


def test_normal_equations_oracle():
    rng = np.random.default_rng(42)
    X = _design(rng, 30, 3)
    y = rng.normal(size=30)
    fit = fit_ols(X, y)
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    assert np.allclose(fit.coefficients, beta, rtol=1e-8, atol=0)
    resid = y - X @ beta
    s2 = resid @ resid / (30 - 4)
    assert fit.sigma2_hat == pytest.approx(s2, rel=1e-10)
    assert np.allclose(fit.cov, s2 * np.linalg.inv(X.T @ X), rtol=1e-8)
    assert fit.deviance == pytest.approx(30 * math.log(resid @ resid / 30), rel=1e-12)
    assert np.allclose(fit.cov, fit.cov.T)
    assert np.linalg.eigvalsh(fit.cov).min() > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 60), st.integers(1, 5))
def test_invariants_on_random_instances(seed, n, k):
    k = min(k, n - 3)
    rng = np.random.default_rng(seed)
    X = _design(rng, n, k)
    y = rng.normal(size=n)
    fit = fit_ols(X, y)
    tss = float(np.sum((y - y.mean()) ** 2))
    assert fit.rss <= tss * (1 + 1e-12)
    assert fit.r2 == pytest.approx(1 - fit.rss / tss, abs=1e-12)
    # nesting: adding a column never increases rss
    bigger = fit_ols(np.column_stack([X, rng.normal(size=n)]), y, check_degenerate=False)
    assert bigger.rss <= fit.rss * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_deviance_differences_add_up(seed):
    rng = np.random.default_rng(seed)
    n = 40
    X = _design(rng, n, 3)
    y = X @ rng.normal(size=4) + rng.normal(size=n)
    a, b, c = (fit_ols(X[:, :j], y) for j in (1, 2, 4))
    total = deviance_difference(a, c)
    assert total == pytest.approx(deviance_difference(a, b) + deviance_difference(b, c), abs=1e-8)
    assert deviance_difference(a, a) == 0.0


def test_deviance_difference_from_ratio():
    # rss ratio e with n = 10 gives 10 n-log units
    assert 10 * math.log(math.e * 2.0 / 2.0) == pytest.approx(10.0)
    assert deviance(math.e * 2.0, 10) - deviance(2.0, 10) == pytest.approx(10.0)


def test_deviance_difference_matches_independent_fits():
    rng = np.random.default_rng(7)
    n = 50
    x = rng.uniform(1, 10, n)
    y = np.log(x) + rng.normal(0, 0.3, n)
    small = np.column_stack([np.ones(n), np.log(x)])
    large = np.column_stack([small, x**2])
    r_small = np.linalg.lstsq(small, y, rcond=None)[1][0]
    r_large = np.linalg.lstsq(large, y, rcond=None)[1][0]
    got = deviance_difference(fit_ols(small, y), fit_ols(large, y))
    assert got == pytest.approx(n * math.log(r_small / r_large), rel=1e-9)


def test_mismatched_fits():
    rng = np.random.default_rng(1)
    a = fit_ols(np.ones((10, 1)), rng.normal(size=10))
    b = fit_ols(np.ones((12, 1)), rng.normal(size=12))
    with pytest.raises(MismatchedFits):
        deviance_difference(a, b)


@pytest.mark.parametrize("x, k", [(9.488, 4), (5.991, 2), (7.815, 3)])
def test_chisq_sf_at_five_percent_points(x, k):
    assert chisq_sf(x, k) == pytest.approx(0.05, abs=1e-3)


def test_chisq_sf_zero_and_inf():
    for k in (1, 2, 7):
        assert chisq_sf(0.0, k) == 1.0
        assert chisq_sf(math.inf, k) == 0.0
    assert math.isnan(chisq_sf(math.nan, 2))


@settings(max_examples=200)
@given(st.floats(0.0, 200.0), st.integers(1, 40))
def test_chisq_sf_against_scipy(x, k):
    assert chisq_sf(x, k) == pytest.approx(stats.chi2.sf(x, k), abs=1e-10)


@pytest.mark.parametrize("alpha, k, expected", [
    (0.05, 4, 9.488), (0.05, 3, 7.815), (0.05, 2, 5.991),
    (0.01, 4, 13.277), (0.01, 3, 11.345), (0.01, 2, 9.210),
])
def test_chisq_quantile_reference_values(alpha, k, expected):
    assert chisq_quantile(alpha, k) == pytest.approx(expected, abs=1e-3)


@settings(max_examples=60)
@given(st.floats(1e-6, 0.999), st.integers(1, 30))
def test_quantile_round_trip(alpha, k):
    assert chisq_sf(chisq_quantile(alpha, k), k) == pytest.approx(alpha, abs=1e-9)


def test_gamma_q_branches_agree_with_scipy():
    from scipy.special import gammaincc

    for a in (0.5, 1.0, 2.5, 10.0):
        for x in (0.1, a, a + 1.0, 3 * a + 5):
            assert gamma_q(a, x) == pytest.approx(gammaincc(a, x), abs=1e-12)
