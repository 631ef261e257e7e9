import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dcmd.errors import ValidationError
from dcmd.nbinom import nb_logpmf, nb_pmf, nb_survival, pmf_grid

positive = st.floats(min_value=0.05, max_value=30.0, allow_nan=False)


def test_pmf_at_zero_is_p_to_alpha():
    assert nb_pmf(0, 1.0, 1.0, 1.0) == pytest.approx(0.5)
    assert nb_pmf(0, 2.0, 1.0, 1.0) == pytest.approx(0.25)


def test_matches_scipy_parameterization():
    rng = np.random.default_rng(0)
    for _ in range(50):
        alpha = rng.uniform(0.1, 20)
        beta = rng.uniform(0.1, 10)
        t = rng.uniform(0.2, 3)
        x = rng.integers(0, 60)
        expected = stats.nbinom.pmf(x, alpha, beta / (t + beta))
        assert nb_pmf(x, alpha, beta, t) == pytest.approx(expected, rel=1e-12)


@given(alpha=positive, beta=positive, t=positive)
def test_sums_to_one_with_analytic_tail(alpha, beta, t):
    x_max = 400
    total = nb_pmf(np.arange(x_max + 1), alpha, beta, t).sum()
    assert abs(total + nb_survival(x_max, alpha, beta, t) - 1.0) < 1e-10


@given(alpha=positive, beta=positive, t=positive, x=st.integers(0, 100))
def test_survival_is_complement_of_cumulative(alpha, beta, t, x):
    head = nb_pmf(np.arange(x + 1), alpha, beta, t).sum()
    assert nb_survival(x, alpha, beta, t) == pytest.approx(1.0 - head, abs=1e-9)


def test_log_space_handles_extreme_counts():
    lp = nb_logpmf(5000, 0.5, 8.0, 0.7)
    assert np.isfinite(lp)
    assert lp < -100


def test_broadcasting_over_parameters():
    alphas = np.array([1.0, 2.0, 3.0])[:, None]
    out = nb_pmf(np.arange(4)[None, :], alphas, 1.0, 1.0)
    assert out.shape == (3, 4)
    assert out[0, 0] == pytest.approx(0.5)
    assert out[1, 0] == pytest.approx(0.25)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValidationError):
        nb_logpmf(0, bad, 1.0, 1.0)
    with pytest.raises(ValidationError):
        nb_logpmf(0, 1.0, bad, 1.0)
    with pytest.raises(ValidationError):
        nb_logpmf(0, 1.0, 1.0, bad)


def test_monte_carlo_total_variation():
    # Poisson counts with Gamma(3, 1) rates thinned at resolution 0.8
    rng = np.random.default_rng(42)
    n = 10**6
    draws = rng.poisson(rng.gamma(3.0, 1.0, size=n) * 0.8)
    hist = np.bincount(draws, minlength=51)[:51] / n
    pmf = nb_pmf(np.arange(51), 3.0, 1.0, 0.8)
    tv = 0.5 * np.abs(hist - pmf).sum()
    assert tv < 0.01


class TestPmfGrid:
    def test_matches_scalar_pmf(self):
        alphas = [1.0, 4.0]
        betas = [1.0, 2.0]
        ts = [0.5, 1.0, 1.7]
        grid = pmf_grid(alphas, betas, ts, c=6)
        assert grid.shape == (2, 3, 8)
        for m in range(2):
            for i in range(3):
                expected = nb_pmf(np.arange(7), alphas[m], betas[m], ts[i])
                np.testing.assert_allclose(grid[m, i, :7], expected, rtol=1e-12)

    def test_rows_sum_to_one(self):
        grid = pmf_grid([0.3, 2.0, 9.0], [1.0, 1.0, 3.0], [0.4, 1.6], c=12)
        np.testing.assert_allclose(grid.sum(axis=2), 1.0, atol=1e-12)

    def test_tail_matches_survival(self):
        grid = pmf_grid([2.5], [1.2], [1.0], c=5)
        assert grid[0, 0, -1] == pytest.approx(nb_survival(5, 2.5, 1.2, 1.0), abs=1e-12)
