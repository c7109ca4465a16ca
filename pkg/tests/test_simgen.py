import math

import numpy as np
import pytest
from scipy import integrate, stats

from latentrank.errors import ConfigurationError, DomainError
from latentrank.rngdist import RngStream
from latentrank.samplers import ChainConfig
from latentrank.simgen import (
    GRID_COLUMNS,
    CopulaSpec,
    DistributionSpec,
    SimulationGridSpec,
    copula_rho_s,
    copula_sample,
    grid_to_csv,
    invert_rho_s,
    run_grid,
    sample_univariate,
)

LIGHT = ChainConfig(iterations=1000, burnin=200, chains=2)


def batch_spearman(u, v, batches=20):
    """Full-sample Spearman correlation and a batch-means standard error."""
    whole = stats.spearmanr(u, v)[0]
    parts = [stats.spearmanr(a, b)[0] for a, b in zip(np.array_split(u, batches),
                                                        np.array_split(v, batches))]
    return whole, np.std(parts, ddof=1) / math.sqrt(batches)


def copula_rho_s_oracle(cdf):
    """12 * int int C(u, v) du dv - 3 by adaptive quadrature."""
    val, _ = integrate.dblquad(lambda v, u: cdf(u, v), 0, 1, 0, 1, epsabs=1e-10, epsrel=1e-10)
    return 12 * val - 3


class TestUnivariate:
    def test_uniform_mean(self):
        x = sample_univariate(DistributionSpec("uniform"), 100000, RngStream(1))
        assert abs(x.mean() - 0.5) < 3 * math.sqrt(1 / 12 / 1e5)

    def test_logistic_median_shift(self):
        x = sample_univariate(DistributionSpec("logistic", shift=1.5), 100000, RngStream(2))
        se = 1 / (2 * stats.logistic.pdf(0) * math.sqrt(1e5))
        assert abs(np.median(x) - 1.5) < 3 * se

    def test_skew_normal_against_scipy(self):
        x = sample_univariate(DistributionSpec("skew-normal", shape=20), 50000, RngStream(3))
        assert stats.skew(x) > 0.5
        assert stats.kstest(x, stats.skewnorm(20).cdf).pvalue > 1e-3

    @pytest.mark.parametrize("family,ref", [("normal", stats.norm), ("cauchy", stats.cauchy),
                                            ("logistic", stats.logistic),
                                            ("uniform", stats.uniform)])
    def test_families_ks(self, family, ref):
        x = sample_univariate(DistributionSpec(family), 50000, RngStream(4))
        assert stats.kstest(x, ref.cdf).pvalue > 1e-3

    def test_bad_family(self):
        with pytest.raises(ConfigurationError):
            DistributionSpec("gamma")


class TestCopulaRhoS:
    def test_gaussian_kruskal(self):
        assert copula_rho_s(CopulaSpec("gaussian", 0.31287)) == pytest.approx(0.3, abs=1e-5)

    @pytest.mark.parametrize("family,theta", [("gaussian", 0.0), ("clayton", 0.0), ("frank", 0.0),
                                              ("gumbel", 1.0)])
    def test_independence(self, family, theta):
        spec = CopulaSpec(family, theta)
        assert spec.independent
        assert copula_rho_s(spec) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("family,thetas", [("gaussian", np.linspace(-0.95, 0.95, 20)),
                                               ("clayton", np.linspace(0.05, 15, 20)),
                                               ("frank", np.linspace(-20, 20, 21)),
                                               ("gumbel", np.linspace(1.05, 8, 20))])
    def test_monotone(self, family, thetas):
        vals = [copula_rho_s(CopulaSpec(family, float(t))) for t in thetas]
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("family,theta,cdf", [
        ("clayton", 2.0, lambda u, v: (u ** -2 + v ** -2 - 1) ** -0.5),
        ("gumbel", 1.7, lambda u, v: math.exp(-((-math.log(u)) ** 1.7
                                                + (-math.log(v)) ** 1.7) ** (1 / 1.7))),
        ("frank", 4.0, lambda u, v: -0.25 * math.log1p(math.expm1(-4 * u) * math.expm1(-4 * v)
                                                      / math.expm1(-4))),
    ])
    def test_against_independent_quadrature(self, family, theta, cdf):
        assert copula_rho_s(CopulaSpec(family, theta)) == pytest.approx(copula_rho_s_oracle(cdf),
                                                                       abs=1e-6)

    def test_admissibility(self):
        with pytest.raises(DomainError):
            CopulaSpec("clayton", -0.5)
        with pytest.raises(DomainError):
            CopulaSpec("gumbel", 0.5)
        with pytest.raises(DomainError):
            CopulaSpec("gaussian", 1.0)


class TestInversion:
    def test_gaussian_closed_form(self):
        assert invert_rho_s("gaussian", 0.3).theta == pytest.approx(2 * math.sin(0.05 * math.pi), abs=1e-5)

    @pytest.mark.parametrize("family", ["gaussian", "clayton", "frank", "gumbel"])
    @pytest.mark.parametrize("target", [0.1, 0.3, 0.5, 0.8])
    def test_round_trip(self, family, target):
        spec = invert_rho_s(family, target)
        assert spec.target_rho_s == target
        assert abs(copula_rho_s(spec) - target) <= 1e-6

    def test_zero_target_is_independence(self):
        for family in ("gaussian", "clayton", "frank", "gumbel"):
            assert invert_rho_s(family, 0.0).independent

    def test_negative_targets(self):
        assert copula_rho_s(invert_rho_s("frank", -0.4)) == pytest.approx(-0.4, abs=1e-6)
        with pytest.raises(ConfigurationError):
            invert_rho_s("clayton", -0.4)

    @pytest.mark.parametrize("target", [1.0, -1.0, 1.5])
    def test_bad_target(self, target):
        with pytest.raises(ConfigurationError):
            invert_rho_s("frank", target)


class TestCopulaSampling:
    @pytest.mark.parametrize("family", ["gaussian", "clayton", "frank", "gumbel"])
    def test_uniform_margins(self, family):
        u, v = copula_sample(invert_rho_s(family, 0.5), 100000, RngStream(5))
        assert stats.kstest(u, "uniform").pvalue > 1e-3
        assert stats.kstest(v, "uniform").pvalue > 1e-3
        assert ((u > 0) & (u < 1) & (v > 0) & (v < 1)).all()

    def test_clayton_high_dependence(self):
        u, v = copula_sample(invert_rho_s("clayton", 0.8), 100000, RngStream(6))
        est, se = batch_spearman(u, v)
        assert abs(est - 0.8) < 3 * se

    @pytest.mark.parametrize("family", ["gaussian", "clayton", "frank", "gumbel"])
    @pytest.mark.parametrize("target", [0.3, 0.6])
    def test_monte_carlo_matches_target(self, family, target):
        u, v = copula_sample(invert_rho_s(family, target), 100000, RngStream(7))
        est, se = batch_spearman(u, v)
        assert abs(est - target) < 3 * se

    def test_independence_sample(self):
        u, v = copula_sample(CopulaSpec("gumbel", 1.0), 50000, RngStream(8))
        assert abs(stats.spearmanr(u, v)[0]) < 4 / math.sqrt(50000)

    def test_clayton_lower_tail(self):
        # Clayton has lower-tail dependence 2^(-1/theta); Gumbel has none in the lower tail
        theta = 2.0
        u, v = copula_sample(CopulaSpec("clayton", theta), 400000, RngStream(9))
        q = 0.01
        lam = np.mean((u < q) & (v < q)) / q
        assert lam == pytest.approx(2 ** (-1 / theta), abs=0.06)


class TestGrid:
    def test_row_count_and_columns(self):
        grid = SimulationGridSpec(effect_values=(0.0, 0.5), n_values=(6, 8), replicates=2)
        rows = run_grid(grid, "ranksum", config=LIGHT)
        assert len(rows) == 8
        text = grid_to_csv(rows)
        assert text.splitlines()[0] == ",".join(GRID_COLUMNS)
        assert "runtime" not in text
        assert len(text.splitlines()) == 9

    def test_runtime_column_optional(self):
        grid = SimulationGridSpec(effect_values=(0.0,), n_values=(6,), replicates=1,
                                  record_runtime=True)
        rows = run_grid(grid, "signedrank", config=LIGHT)
        assert rows[0].runtime is not None and rows[0].runtime >= 0
        assert grid_to_csv(rows, record_runtime=True).splitlines()[0].endswith(",runtime")

    def test_deterministic(self):
        grid = SimulationGridSpec(effect_values=(0.5,), n_values=(8,), replicates=3, seed=17)
        a = grid_to_csv(run_grid(grid, "signedrank", config=LIGHT))
        b = grid_to_csv(run_grid(grid, "signedrank", config=LIGHT))
        assert a == b

    def test_replicates_do_not_depend_on_grid_size(self):
        small = SimulationGridSpec(effect_values=(0.5,), n_values=(8,), replicates=1, seed=3)
        large = SimulationGridSpec(effect_values=(0.5,), n_values=(8,), replicates=3, seed=3)
        assert run_grid(small, "ranksum", config=LIGHT)[0] == run_grid(large, "ranksum", config=LIGHT)[0]

    def test_null_cell_favours_h0(self):
        grid = SimulationGridSpec(effect_values=(0.0,), n_values=(30,), replicates=20, seed=5)
        rows = run_grid(grid, "ranksum", config=LIGHT)
        assert np.median([r.log_bf10_latent for r in rows]) < 0
        assert np.median([r.log_bf10_comparator for r in rows]) < 0

    def test_statistic_sign_follows_effect(self):
        grid = SimulationGridSpec(effect_values=(1.5,), n_values=(20,), replicates=8, seed=6)
        for test in ("ranksum", "signedrank"):
            rows = run_grid(grid, test, config=LIGHT)
            assert all(r.statistic > 0 for r in rows)
            latent = np.array([r.log_bf10_latent for r in rows])
            comparator = np.array([r.log_bf10_comparator for r in rows])
            assert np.median(latent) > 0
            # near-normal margins: the rank model and the t model should largely agree
            assert np.corrcoef(latent, comparator)[0, 1] > 0.8

    def test_spearman_grid(self):
        grid = SimulationGridSpec(effect_values=(0.0, 0.5), n_values=(10,), replicates=2,
                                  family="clayton")
        rows = run_grid(grid, "spearman", config=LIGHT)
        assert len(rows) == 4
        assert all(math.isnan(r.log_bf10_comparator) for r in rows)
        assert all(math.isfinite(r.log_bf10_latent) for r in rows)

    def test_spearman_needs_copula(self):
        grid = SimulationGridSpec(effect_values=(0.5,), n_values=(10,), replicates=1)
        rows = run_grid(grid, "spearman", config=LIGHT)
        assert math.isnan(rows[0].log_bf10_latent)

    @pytest.mark.parametrize("kw", [{"replicates": 0}, {"n_values": (0,)}, {"effect_values": ()},
                                    {"scenario": "other"}, {"family": "gamma"}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            SimulationGridSpec(**kw)

    def test_unknown_test(self):
        with pytest.raises(ConfigurationError):
            run_grid(SimulationGridSpec(replicates=1), "ttest")
