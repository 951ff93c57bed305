import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from leapborrow import (
    Dataset,
    HistoricalDataset,
    NormalGammaPrior,
    PoissonGammaPrior,
    ValidationError,
    npp_conditional_posterior,
    npp_log_norm_const,
    npp_posterior,
    reference_posterior,
)
from leapborrow.comparators import A0Prior, NppConfig, ReferencePriorConfig, npp_a0_posterior
from leapborrow.diagnostics import batch_means_se


def quad_log_c_poisson(a0, y0, eta0, beta0):
    """1-D quadrature of the weighted Poisson likelihood against the gamma prior."""
    s0, n0 = float(y0.sum()), y0.size
    lfact = float(gammaln(y0 + 1).sum())
    shift = None

    def log_integrand(th):
        return (
            a0 * (s0 * np.log(th) - n0 * th - lfact)
            + eta0 * np.log(beta0)
            - gammaln(eta0)
            + (eta0 - 1) * np.log(th)
            - beta0 * th
        )

    mode = max((a0 * s0 + eta0 - 1), 0.1) / (a0 * n0 + beta0)
    shift = log_integrand(max(mode, 1e-6))
    val, err = integrate.quad(
        lambda th: np.exp(log_integrand(th) - shift),
        0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=500,
    )
    return shift + np.log(val)


def quad_log_c_linear(a0, X0, y0, prior):
    """2-D quadrature over (coefficient, precision) for an intercept-only block."""
    om, mu = prior.omega0[0, 0], prior.mu0[0]
    d0, x0 = prior.delta0, prior.xi0
    n0 = y0.size

    def inner(b):
        # inner integral over log precision; outer over the coefficient uses
        # infinite limits so the heavy prior tails are captured exactly
        def g(t):
            tau = np.exp(t)
            ll = a0 * (-n0 / 2 * np.log(2 * np.pi) + n0 / 2 * t - tau / 2 * np.sum((y0 - b) ** 2))
            lp = (
                0.5 * (t + np.log(om) - np.log(2 * np.pi))
                - tau * om / 2 * (b - mu) ** 2
                + d0 / 2 * np.log(x0 / 2)
                - gammaln(d0 / 2)
                + (d0 / 2 - 1) * t
                - x0 / 2 * tau
                + t
            )
            return np.exp(ll + lp)

        v, _ = integrate.quad(g, -30, 14, epsabs=1e-16, epsrel=1e-13, limit=800)
        return v

    val, _ = integrate.quad(
        inner, -np.inf, np.inf, epsabs=1e-16, epsrel=1e-12, limit=800
    )
    return np.log(val)


class TestPoissonNormConst:
    def test_zero_weight_is_zero(self):
        hist = HistoricalDataset(y0=np.array([1.0, 4.0, 2.0]))
        cfg = NppConfig(prior=PoissonGammaPrior(0.5, 0.5))
        assert npp_log_norm_const(0.0, hist, cfg) == pytest.approx(0.0, abs=1e-12)

    def test_full_weight_is_marginal_likelihood(self):
        y0 = np.array([1.0, 4.0, 2.0])
        hist = HistoricalDataset(y0=y0)
        cfg = NppConfig(prior=PoissonGammaPrior(0.5, 0.5))
        s0, n0 = y0.sum(), y0.size
        expect = (
            -gammaln(y0 + 1).sum()
            + 0.5 * np.log(0.5)
            - gammaln(0.5)
            + gammaln(s0 + 0.5)
            - (s0 + 0.5) * np.log(n0 + 0.5)
        )
        assert npp_log_norm_const(1.0, hist, cfg) == pytest.approx(expect, rel=1e-12)

    def test_matches_quadrature(self):
        rng = np.random.default_rng(0)
        y0 = rng.poisson(3.0, size=6).astype(float)
        hist = HistoricalDataset(y0=y0)
        cfg = NppConfig(prior=PoissonGammaPrior(1.3, 0.7))
        for a0 in (0.37, 0.05, 0.93):
            lc = npp_log_norm_const(a0, hist, cfg)
            lq = quad_log_c_poisson(a0, y0, 1.3, 0.7)
            assert abs(lc - lq) <= 1e-8 * max(1.0, abs(lq))

    def test_out_of_range_weight(self):
        hist = HistoricalDataset(y0=np.array([1.0]))
        cfg = NppConfig(prior=PoissonGammaPrior(1.0, 1.0))
        with pytest.raises(ValidationError, match="a0"):
            npp_log_norm_const(1.2, hist, cfg)


class TestLinearNormConst:
    def test_matches_quadrature(self):
        rng = np.random.default_rng(1)
        n0 = 7
        y0 = rng.normal(1.0, 1.0, size=n0)
        hist = HistoricalDataset(y0=y0, X0=np.ones((n0, 1)))
        prior = NormalGammaPrior(np.array([0.4]), np.array([[1.7]]), 3.0, 2.0)
        cfg = NppConfig(prior=prior)
        for a0 in (0.0, 0.41, 1.0):
            lc = npp_log_norm_const(a0, hist, cfg)
            lq = quad_log_c_linear(a0, hist.X0, y0, prior)
            assert abs(lc - lq) <= 1e-8 * max(1.0, abs(lq))

    def test_improper_prior_rejected(self):
        with pytest.raises(ValidationError, match="proper"):
            NppConfig(
                prior=NormalGammaPrior(np.zeros(1), np.zeros((1, 1)), 1.0, 1.0)
            )


def _poisson_setup(seed=2, n=25, n0=12, rate=2.0, rate0=None):
    rng = np.random.default_rng(seed)
    y = rng.poisson(rate, size=n).astype(float)
    y0 = rng.poisson(rate0 or rate, size=n0).astype(float)
    return Dataset(y=y), HistoricalDataset(y0=y0)


class TestBoundaryDegeneracies:
    def test_poisson_no_borrowing_and_pooling(self):
        data, hist = _poisson_setup()
        cfg = NppConfig(prior=PoissonGammaPrior(0.5, 0.5))
        sh0, ra0 = npp_conditional_posterior(0.0, data, hist, cfg)
        assert sh0 == 0.5 + data.y.sum()
        assert ra0 == 0.5 + data.n
        sh1, ra1 = npp_conditional_posterior(1.0, data, hist, cfg)
        assert sh1 == 0.5 + data.y.sum() + hist.y0.sum()
        assert ra1 == 0.5 + data.n + hist.n0

    def test_linear_no_borrowing_and_pooling(self):
        rng = np.random.default_rng(3)
        n, n0 = 15, 9
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = X @ np.array([1.0, -0.5]) + rng.normal(size=n)
        X0 = np.column_stack([np.ones(n0), rng.normal(size=n0)])
        y0 = X0 @ np.array([1.0, -0.5]) + rng.normal(size=n0)
        data = Dataset(y=y, X=X)
        hist = HistoricalDataset(y0=y0, X0=X0)
        prior = NormalGammaPrior(np.zeros(2), 0.1 * np.eye(2), 2.0, 2.0)
        cfg = NppConfig(prior=prior)

        m0, _, sh0, ra0 = npp_conditional_posterior(0.0, data, hist, cfg)
        P_expect = prior.omega0 + X.T @ X
        m_expect = np.linalg.solve(P_expect, X.T @ y)
        assert np.allclose(m0, m_expect, atol=1e-12)
        assert sh0 == pytest.approx((n + 2.0) / 2)

        m1, _, sh1, ra1 = npp_conditional_posterior(1.0, data, hist, cfg)
        P1 = prior.omega0 + X.T @ X + X0.T @ X0
        m1_expect = np.linalg.solve(P1, X.T @ y + X0.T @ y0)
        assert np.allclose(m1, m1_expect, atol=1e-12)
        assert sh1 == pytest.approx((n + n0 + 2.0) / 2)


class TestGridPosterior:
    def test_pmf_normalizes(self):
        data, hist = _poisson_setup()
        cfg = NppConfig(prior=PoissonGammaPrior(0.5, 0.5), a0_grid_size=101)
        grid, pmf = npp_a0_posterior(data, hist, cfg)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert grid.size == 101

    def test_conflict_drives_weight_to_zero(self):
        data, hist = _poisson_setup(seed=4, n=40, n0=60, rate=1.5, rate0=30.0)
        cfg = NppConfig(prior=PoissonGammaPrior(0.5, 0.5), a0_grid_size=201)
        grid, pmf = npp_a0_posterior(data, hist, cfg)
        assert grid @ pmf < 0.1

    def test_truncated_uniform_caps_grid(self):
        data, hist = _poisson_setup()
        cfg = NppConfig(
            prior=PoissonGammaPrior(0.5, 0.5),
            a0_prior=A0Prior("truncated_uniform", bound=0.48),
            a0_grid_size=51,
        )
        grid, pmf = npp_a0_posterior(data, hist, cfg)
        assert grid.max() == pytest.approx(0.48)

    def test_fixed_weight_draws(self):
        data, hist = _poisson_setup()
        cfg = NppConfig(
            prior=PoissonGammaPrior(0.5, 0.5), a0_prior=A0Prior("fixed", value=1.0)
        )
        draws = npp_posterior(data, hist, cfg, n_draws=2000, seed=0)
        assert np.all(draws.column("a0") == 1.0)
        sh, ra = npp_conditional_posterior(1.0, data, hist, cfg)
        se = batch_means_se(draws.column("theta_1"))
        assert abs(draws.column("theta_1").mean() - sh / ra) < 4 * se

    def test_deterministic_given_seed(self):
        data, hist = _poisson_setup()
        cfg = NppConfig(prior=PoissonGammaPrior(0.5, 0.5), a0_grid_size=101)
        a = npp_posterior(data, hist, cfg, n_draws=500, seed=7)
        b = npp_posterior(data, hist, cfg, n_draws=500, seed=7)
        assert np.array_equal(a.values, b.values)

    def test_linear_draws_have_treatment_column(self):
        rng = np.random.default_rng(5)
        n, n0 = 30, 20
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        z = (rng.random(n) < 0.5).astype(float)
        y = X @ np.array([1.0, 0.5]) - 2.0 * z + rng.normal(size=n)
        X0 = np.column_stack([np.ones(n0), rng.normal(size=n0)])
        y0 = X0 @ np.array([1.0, 0.5]) + rng.normal(size=n0)
        data = Dataset(y=y, z=z, X=X)
        hist = HistoricalDataset(y0=y0, X0=X0)
        prior = NormalGammaPrior(np.zeros(3), 0.01 * np.eye(3), 0.02, 0.02)
        draws = npp_posterior(data, hist, NppConfig(prior=prior, a0_grid_size=101),
                              n_draws=3000, seed=1)
        est = draws.column("beta_1_3").mean()
        assert abs(est + 2.0) < 0.5


class TestReferencePosterior:
    def test_flat_prior_recovers_mle(self):
        rng = np.random.default_rng(6)
        n = 200
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = X @ np.array([2.0, -1.0]) + 0.7 * rng.standard_normal(n)
        data = Dataset(y=y, X=X)
        cfg = ReferencePriorConfig(coef_sd=1e6, sigma_sd=1e6)
        draws = reference_posterior(data, cfg, n_draws=6000, burn_in=1000, seed=0)
        bhat = np.linalg.solve(X.T @ X, X.T @ y)
        for j in range(2):
            x = draws.column(f"beta_1_{j + 1}")
            assert abs(x.mean() - bhat[j]) < 2.5 * max(batch_means_se(x), 1e-6)

    def test_posterior_sd_scales_with_root_n(self):
        sds = {}
        for n in (100, 400):
            rng = np.random.default_rng(100 + n)
            X = np.column_stack([np.ones(n), rng.normal(size=n)])
            y = X @ np.array([1.0, 0.5]) + rng.standard_normal(n)
            draws = reference_posterior(
                Dataset(y=y, X=X), ReferencePriorConfig(),
                n_draws=9000, burn_in=1000, seed=n,
            )
            sds[n] = draws.column("beta_1_2").std()
        ratio = sds[100] / sds[400]
        assert 1.7 <= ratio <= 2.3

    def test_same_seed_identical(self):
        rng = np.random.default_rng(7)
        n = 40
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = X @ np.array([1.0, 0.5]) + rng.standard_normal(n)
        data = Dataset(y=y, X=X)
        a = reference_posterior(data, ReferencePriorConfig(), n_draws=800, burn_in=200, seed=3)
        b = reference_posterior(data, ReferencePriorConfig(), n_draws=800, burn_in=200, seed=3)
        assert np.array_equal(a.values, b.values)

    def test_acceptance_rate_recorded(self):
        rng = np.random.default_rng(8)
        n = 50
        X = np.ones((n, 1))
        y = 2.0 + rng.standard_normal(n)
        draws = reference_posterior(
            Dataset(y=y, X=X), ReferencePriorConfig(), n_draws=3000, burn_in=500, seed=1
        )
        assert 0.1 <= draws.meta["accept_rate"] <= 0.9
