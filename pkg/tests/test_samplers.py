import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from latentrank.errors import (
    ConfigurationError,
    DomainError,
    InvalidParameterError,
    SampleTooSmallError,
    UndefinedStatisticError,
)
from latentrank.geweke import (
    geweke_ranksum,
    geweke_signedrank,
    geweke_spearman,
    ks_distance_cauchy,
    ks_distance_uniform,
)
from latentrank.rngdist import RngStream
from latentrank.samplers import (
    ChainConfig,
    PriorSpec,
    bivariate_normal_loglik,
    delta_conditional_onesample,
    delta_conditional_twosample,
    g_conditional,
    rho_log_acceptance,
    ranksum_chain,
    run_chains,
    signedrank_chain,
    spearman_chain,
)

FAST = ChainConfig(iterations=2000, burnin=500, chains=2, seed=3)


def pooled(chains):
    return np.concatenate([c.parameter_samples for c in chains])


class TestConditionals:
    def test_twosample_substitution(self):
        mu, var = delta_conditional_twosample([-0.5], [0.5], 1.0)
        assert mu == pytest.approx(1 / 3, abs=1e-15)
        assert var == pytest.approx(2 / 3, abs=1e-15)

    def test_twosample_symmetry(self):
        for g in (0.1, 1.0, 30.0):
            assert delta_conditional_twosample([1.0, -1.0], [0.5, -0.5], g)[0] == 0

    def test_twosample_small_g(self):
        mu, var = delta_conditional_twosample([-1.0], [2.0], 1e-12)
        assert abs(mu) < 1e-10 and var < 1e-10

    def test_twosample_against_regression_posterior(self):
        # delta | z, g is the posterior of a regression coefficient with N(0, g) prior:
        # precision = 1/g + sum(c_i^2), mean = sum(c_i z_i) / precision, c = -1/2 or 1/2
        rng = np.random.default_rng(1)
        zx, zy, g = rng.normal(size=5), rng.normal(size=7), 0.8
        c = np.r_[np.full(5, -0.5), np.full(7, 0.5)]
        prec = 1 / g + c @ c
        mu, var = delta_conditional_twosample(zx, zy, g)
        assert mu == pytest.approx(c @ np.r_[zx, zy] / prec, rel=1e-12)
        assert var == pytest.approx(1 / prec, rel=1e-12)

    def test_onesample_substitution(self):
        assert delta_conditional_onesample([1.0], 1.0) == (0.5, 0.5)
        assert delta_conditional_onesample([1.0, -1.0], 2.0)[0] == 0

    def test_onesample_large_g(self):
        mu, var = delta_conditional_onesample([1.0, 2.0, 3.0], 1e12)
        assert mu == pytest.approx(2.0, rel=1e-9)
        assert var == pytest.approx(1 / 3, rel=1e-9)

    def test_variance_decreasing_in_n(self):
        for g in (0.2, 1.0, 5.0):
            v2 = [delta_conditional_twosample(np.zeros(n), np.zeros(n), g)[1] for n in range(1, 30)]
            v1 = [delta_conditional_onesample(np.zeros(n), g)[1] for n in range(1, 30)]
            assert np.all(np.diff(v2) < 0) and np.all(np.diff(v1) < 0)

    def test_g_conditional(self):
        s = RngStream(2)
        draws = np.array([g_conditional(0.0, math.sqrt(2), s) for _ in range(10**5)])
        assert (draws > 0).all()
        assert np.median(draws) == pytest.approx(1 / math.log(2), rel=0.02)

    def test_g_conditional_scale(self):
        # scale (delta^2 + gamma^2)/2 = 1 for delta = gamma = 1: same law as above
        s = RngStream(3)
        draws = np.array([g_conditional(1.0, 1.0, s) for _ in range(20000)])
        assert stats.kstest(draws, stats.invgamma(1, scale=1.0).cdf).pvalue > 1e-3

    def test_invalid(self):
        with pytest.raises(InvalidParameterError):
            delta_conditional_onesample([1.0], 0.0)
        with pytest.raises(InvalidParameterError):
            g_conditional(0.0, 0.0, RngStream(1))


class TestBivariateNormal:
    def test_independence(self):
        x, y = np.array([0.3, -1.2, 2.0]), np.array([1.1, 0.0, -0.4])
        ref = stats.norm.logpdf(x).sum() + stats.norm.logpdf(y).sum()
        assert bivariate_normal_loglik(x, y, 0.0) == pytest.approx(ref, rel=1e-13)

    def test_origin(self):
        assert bivariate_normal_loglik([0.0], [0.0], 0.0) == pytest.approx(-math.log(2 * math.pi))

    def test_density_formula(self):
        ref = stats.multivariate_normal([0, 0], [[1, 0.5], [0.5, 1]]).logpdf([1, 1])
        assert bivariate_normal_loglik([1.0], [1.0], 0.5) == pytest.approx(ref, rel=1e-13)

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
    def test_domain(self, rho):
        with pytest.raises(DomainError):
            bivariate_normal_loglik([0.0], [0.0], rho)

    def test_zero_move_accepts(self):
        assert rho_log_acceptance(2.0, 3.0, 1.0, 5.0, 0.3, 0.3) == 0.0


class TestConfig:
    def test_defaults(self):
        c = ChainConfig()
        assert (c.iterations, c.burnin, c.chains, c.thin) == (5000, 1000, 4, 1)

    @pytest.mark.parametrize("kw", [{"iterations": 0}, {"burnin": -1}, {"chains": 0},
                                    {"thin": 0}, {"seed": -1}, {"seed": 2**64}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            ChainConfig(**kw)

    def test_prior(self):
        assert PriorSpec().cauchy_scale == pytest.approx(1 / math.sqrt(2))
        with pytest.raises(ConfigurationError):
            PriorSpec.cauchy(0.0)
        with pytest.raises(ConfigurationError):
            PriorSpec("normal")

    def test_thinning(self):
        cfg = ChainConfig(iterations=100, burnin=10, thin=3, chains=1)
        out = ranksum_chain([1, 2, 3], [2, 4, 5], config=cfg)
        assert len(out) == 100 and len(out.conditional_mean) == 100


class TestRankSumChain:
    def test_null_data_centred(self):
        x = np.repeat(np.arange(10.0), 5)
        out = run_chains(ranksum_chain, x, x.copy(), prior=PriorSpec(), config=ChainConfig())
        assert abs(np.median(pooled(out))) < 0.15

    def test_monotone_invariance(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=12), rng.normal(0.5, size=15)
        a = ranksum_chain(x, y, config=FAST)
        b = ranksum_chain(np.exp(x), np.exp(y), config=FAST)
        assert np.array_equal(a.parameter_samples, b.parameter_samples)
        assert np.array_equal(a.conditional_mean, b.conditional_mean)

    def test_group_swap_flips_sign(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=20), rng.normal(0.8, size=20)
        cfg = ChainConfig(iterations=5000, chains=4, seed=9)
        a = np.median(pooled(run_chains(ranksum_chain, x, y, prior=PriorSpec(), config=cfg)))
        b = np.median(pooled(run_chains(ranksum_chain, y, x, prior=PriorSpec(), config=cfg)))
        assert a > 0 and b < 0
        assert abs(a + b) < 0.05

    def test_outputs_consistent(self):
        out = ranksum_chain([1, 1, 2, 5], [3, 3, 7], config=FAST)
        assert np.isfinite(out.parameter_samples).all()
        assert (out.conditional_sd > 0).all()

    def test_requires_cauchy(self):
        with pytest.raises(ConfigurationError):
            ranksum_chain([1, 2], [3, 4], prior=PriorSpec.uniform())


class TestSignedRankChain:
    def test_antisymmetric_data(self):
        d = np.array([-3.0, -1.0, 1.0, 3.0])
        out = run_chains(signedrank_chain, d, prior=PriorSpec(), config=ChainConfig())
        samples = pooled(out)
        se = 1.25 * samples.std() / math.sqrt(2000)
        assert abs(np.median(samples)) < 4 * se

    def test_odd_monotone_invariance(self):
        d = np.array([0.4, -1.3, 2.2, 0.9, -0.2, 3.1, 1.7])
        a = signedrank_chain(d, config=FAST)
        b = signedrank_chain(d * np.abs(d), config=FAST)
        assert np.array_equal(a.parameter_samples, b.parameter_samples)

    def test_all_positive(self):
        d = np.arange(1.0, 21.0)
        samples = pooled(run_chains(signedrank_chain, d, prior=PriorSpec(), config=ChainConfig()))
        assert (samples > 0).mean() > 0.95

    def test_zeros_dropped_and_reported(self):
        out = signedrank_chain([0.0, 1.0, -2.0, 0.0, 3.0], config=FAST)
        assert out.extra["n_zero_dropped"] == 2

    def test_all_zero(self):
        with pytest.raises(UndefinedStatisticError):
            signedrank_chain([0.0, 0.0])


class TestSpearmanChain:
    def test_independent_data(self):
        rng = np.random.default_rng(5)
        x, y = rng.permutation(50), rng.permutation(50)
        out = run_chains(spearman_chain, x, y, prior=PriorSpec.uniform(), config=ChainConfig())
        assert abs(np.median(pooled(out))) < 0.12 + abs(stats.spearmanr(x, y)[0])

    def test_concordant(self):
        x = np.arange(20.0)
        out = run_chains(spearman_chain, x, x ** 2, prior=PriorSpec.uniform(), config=ChainConfig())
        samples = pooled(out)
        assert np.median(samples) > 0.8
        assert np.abs(samples).max() < 1

    @pytest.mark.parametrize("n", [10, 20, 50])
    def test_acceptance_band(self, n):
        rng = np.random.default_rng(n)
        x = rng.normal(size=n)
        y = 0.4 * x + rng.normal(size=n)
        out = spearman_chain(x, y, config=FAST)
        assert 0.1 < out.acceptance_rate < 0.9

    def test_too_small(self):
        with pytest.raises(SampleTooSmallError):
            spearman_chain([1, 2, 3], [3, 1, 2])

    def test_constant_margin(self):
        with pytest.raises(UndefinedStatisticError):
            spearman_chain([1, 1, 1, 1, 1], [1, 2, 3, 4, 5])

    def test_monotone_invariance(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=15), rng.normal(size=15)
        a = spearman_chain(x, y, config=FAST)
        b = spearman_chain(x ** 3, np.exp(y), config=FAST)
        assert np.array_equal(a.parameter_samples, b.parameter_samples)


@given(st.integers(0, 2**63))
@settings(max_examples=20, deadline=None)
def test_chain_streams_reproducible(seed):
    cfg = ChainConfig(iterations=50, burnin=5, chains=2, seed=seed)
    a = run_chains(ranksum_chain, [1, 2, 2], [3, 1], prior=PriorSpec(), config=cfg)
    b = run_chains(ranksum_chain, [1, 2, 2], [3, 1], prior=PriorSpec(), config=cfg)
    assert all(np.array_equal(u.parameter_samples, v.parameter_samples) for u, v in zip(a, b))
    assert not np.array_equal(a[0].parameter_samples, a[1].parameter_samples)


@pytest.mark.slow
class TestGeweke:
    """Successive-conditional checks: n = 5, 10^5 cycles, prior marginal recovered."""

    GAMMA = 1 / math.sqrt(2)

    def test_ranksum(self):
        assert ks_distance_cauchy(geweke_ranksum(5, 100_000, transitions=5), self.GAMMA) < 0.02

    def test_signedrank(self):
        assert ks_distance_cauchy(geweke_signedrank(5, 100_000, transitions=5), self.GAMMA) < 0.02

    def test_spearman(self):
        assert ks_distance_uniform(geweke_spearman(5, 100_000, transitions=5)) < 0.02
