"""Savage-Dickey Bayes factors, posterior summaries and MCMC diagnostics.

The Bayes factor for a point null nested in the alternative is the ratio of
the posterior to the prior density at the null value,
``BF01 = p(theta0 | data) / p(theta0)``.  For the location parameter delta the
posterior ordinate is Rao-Blackwellised: the full conditional of delta is
normal, so averaging its density at zero over the retained iterations gives an
unbiased, low-variance estimate.  For the latent correlation rho (uniform
prior) the posterior ordinate comes from a boundary-reflected Gaussian kernel
density estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import (
    DomainError,
    InsufficientSamplesError,
    InvalidDataError,
    InvalidParameterError,
    UndefinedStatisticError,
)
from .ranks import (
    as_sample,
    matched_rank_biserial,
    rank_biserial,
    signed_rank_decomposition,
    spearman_rho,
    u_statistic,
)
from .rngdist import cauchy_pdf
from .samplers import (
    ChainConfig,
    ChainOutput,
    PriorSpec,
    ranksum_chain,
    run_chains,
    signedrank_chain,
    spearman_chain,
)

MIN_KDE_SAMPLES = 1000
MIN_SUMMARY_SAMPLES = 100
UNIFORM_RHO_DENSITY = 0.5


@dataclass(frozen=True)
class BayesFactorResult:
    """Savage-Dickey Bayes factor.

    ``log_bf10`` is exact even when the posterior ordinate underflows; ``bf10``
    may then be ``inf`` and ``posterior_ordinate`` zero.
    """

    bf10: float
    bf01: float
    prior_ordinate: float
    posterior_ordinate: float
    method: str
    log_bf10: float

    @classmethod
    def from_log_ordinates(cls, log_prior: float, log_posterior: float,
                           method: str) -> "BayesFactorResult":
        if not (math.isfinite(log_prior) and math.isfinite(log_posterior)):
            raise UndefinedStatisticError("density ordinates must be positive and finite")
        log_bf10 = float(log_prior - log_posterior)
        return cls(
            bf10=_safe_exp(log_bf10),
            bf01=_safe_exp(-log_bf10),
            prior_ordinate=math.exp(log_prior),
            posterior_ordinate=math.exp(log_posterior),
            method=method,
            log_bf10=log_bf10,
        )

    @classmethod
    def from_ordinates(cls, prior_ordinate: float, posterior_ordinate: float,
                       method: str) -> "BayesFactorResult":
        if not (prior_ordinate > 0 and posterior_ordinate > 0):
            raise UndefinedStatisticError("density ordinates must be positive")
        if not (math.isfinite(prior_ordinate) and math.isfinite(posterior_ordinate)):
            raise UndefinedStatisticError("density ordinates must be finite")
        return cls.from_log_ordinates(math.log(prior_ordinate), math.log(posterior_ordinate),
                                      method)


def _safe_exp(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


@dataclass(frozen=True)
class PosteriorSummary:
    median: float
    ci_lower: float
    ci_upper: float
    ess: float
    rhat: float | None
    n_samples: int


# ---------------------------------------------------------------------------
# Savage-Dickey
# ---------------------------------------------------------------------------


def _pooled(chains: Sequence[ChainOutput], attr: str) -> np.ndarray:
    parts = [getattr(c, attr) for c in chains]
    if any(p is None for p in parts):
        raise InsufficientSamplesError(f"chains carry no {attr}")
    if not parts:
        return np.empty(0)
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def rao_blackwell_density(x, chains: Sequence[ChainOutput]) -> np.ndarray:
    """Posterior density of delta at ``x``: the mixture of the normal full conditionals."""
    mu = _pooled(chains, "conditional_mean")
    sd = _pooled(chains, "conditional_sd")
    if mu.size == 0:
        raise InsufficientSamplesError("no retained iterations")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x.size)
    # chunk the grid so the (grid x samples) block stays small
    step = max(1, 2_000_000 // mu.size)
    inv = 1.0 / sd
    for start in range(0, x.size, step):
        xs = x[start:start + step, None]
        u = (xs - mu[None, :]) * inv[None, :]
        out[start:start + step] = (np.exp(-0.5 * u * u) * inv[None, :]).mean(axis=1)
    return out / math.sqrt(2.0 * math.pi)


def log_rao_blackwell_ordinate(x: float, chains: Sequence[ChainOutput]) -> float:
    """Log of :func:`rao_blackwell_density` at a single point, safe from underflow."""
    mu = _pooled(chains, "conditional_mean")
    sd = _pooled(chains, "conditional_sd")
    if mu.size == 0:
        raise InsufficientSamplesError("no retained iterations")
    u = (float(x) - mu) / sd
    terms = -0.5 * u * u - np.log(sd)
    return float(special.logsumexp(terms) - math.log(mu.size) - 0.5 * math.log(2.0 * math.pi))


def savage_dickey_delta(chains: Sequence[ChainOutput],
                        prior: PriorSpec = PriorSpec()) -> BayesFactorResult:
    """Bayes factor for delta = 0 against the Cauchy alternative.

    Examples
    --------
    With no data the chain samples the prior and the Bayes factor is one up to
    Monte Carlo error; the prior ordinate is ``1 / (pi * gamma)``.
    """
    if prior.kind != "cauchy":
        raise InvalidParameterError("delta Bayes factors need a Cauchy prior")
    if not chains or sum(len(c) for c in chains) == 0:
        raise InsufficientSamplesError("no posterior samples")
    log_prior = math.log(cauchy_pdf(0.0, 0.0, prior.cauchy_scale))
    return BayesFactorResult.from_log_ordinates(log_prior, log_rao_blackwell_ordinate(0.0, chains),
                                                "rao-blackwell")


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    if not spread > 0:
        raise UndefinedStatisticError("samples have zero spread")
    return 0.9 * spread * x.size ** (-0.2)


def reflected_kde(x, samples, lower: float = -1.0, upper: float = 1.0,
                  bandwidth: float | None = None) -> np.ndarray:
    """Gaussian KDE on ``[lower, upper]`` with reflection at both boundaries."""
    s = np.asarray(samples, dtype=float)
    h = silverman_bandwidth(s) if bandwidth is None else float(bandwidth)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(x.size)
    step = max(1, 2_000_000 // (3 * s.size))
    for start in range(0, x.size, step):
        xs = x[start:start + step, None]
        acc = np.zeros(xs.shape[0])
        for centre in (s, 2.0 * lower - s, 2.0 * upper - s):
            u = (xs - centre[None, :]) / h
            acc += np.exp(-0.5 * u * u).sum(axis=1)
        out[start:start + step] = acc
    out /= s.size * h * math.sqrt(2.0 * math.pi)
    out[(x < lower) | (x > upper)] = 0.0
    return out


def log_reflected_kde_ordinate(x: float, samples, lower: float = -1.0, upper: float = 1.0,
                               bandwidth: float | None = None) -> float:
    """Log of :func:`reflected_kde` at a single interior point, safe from underflow."""
    s = np.asarray(samples, dtype=float)
    h = silverman_bandwidth(s) if bandwidth is None else float(bandwidth)
    u = (float(x) - np.concatenate([s, 2.0 * lower - s, 2.0 * upper - s])) / h
    return float(special.logsumexp(-0.5 * u * u)
                 - math.log(s.size * h * math.sqrt(2.0 * math.pi)))


def savage_dickey_rho(chains: Sequence[ChainOutput]) -> BayesFactorResult:
    """Bayes factor for rho = 0 against the uniform prior on (-1, 1)."""
    rho = _pooled(chains, "parameter_samples") if chains else np.empty(0)
    if rho.size < MIN_KDE_SAMPLES:
        raise InsufficientSamplesError(
            f"kernel density ordinate needs at least {MIN_KDE_SAMPLES} samples, got {rho.size}")
    return BayesFactorResult.from_log_ordinates(math.log(UNIFORM_RHO_DENSITY),
                                                log_reflected_kde_ordinate(0.0, rho), "kde")


# ---------------------------------------------------------------------------
# Kruskal transform
# ---------------------------------------------------------------------------


def _check_unit(v, name):
    arr = np.asarray(v, dtype=float)
    if np.isnan(arr).any() or (np.abs(arr) > 1.0).any():
        raise DomainError(f"{name} must lie in [-1, 1]")
    return arr


def kruskal_rho_to_rhos(rho):
    """Population Spearman correlation of a bivariate normal with correlation ``rho``.

    >>> round(kruskal_rho_to_rhos(0.5), 5)
    0.48258
    """
    arr = _check_unit(rho, "rho")
    out = np.clip(6.0 / math.pi * np.arcsin(arr / 2.0), -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def rhos_to_rho(rho_s):
    """Inverse of :func:`kruskal_rho_to_rhos`: ``rho = 2 sin(pi rho_s / 6)``."""
    arr = _check_unit(rho_s, "rho_s")
    out = np.clip(2.0 * np.sin(math.pi * arr / 6.0), -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Summaries and diagnostics
# ---------------------------------------------------------------------------


def _as_chains(chains) -> list[np.ndarray]:
    if isinstance(chains, np.ndarray) and chains.ndim == 1:
        return [chains.astype(float)]
    if isinstance(chains, np.ndarray) and chains.ndim == 2:
        return [row.astype(float) for row in chains]
    return [np.asarray(getattr(c, "parameter_samples", c), dtype=float) for c in chains]


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] == 0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    return acov / acov[0]


def effective_sample_size(chains) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence estimator.

    Capped at the total number of draws.
    """
    parts = _as_chains(chains)
    n = min(p.size for p in parts)
    parts = [p[:n] for p in parts]
    m = len(parts)
    total = m * n
    if n < 4:
        return float(total)
    x = np.vstack(parts)
    chain_var = x.var(axis=1, ddof=1)
    w = chain_var.mean()
    if w == 0:
        return float(total)
    b_over_n = x.mean(axis=1).var(ddof=1) if m > 1 else 0.0
    var_plus = (n - 1) / n * w + b_over_n
    acf = np.mean([_autocorr(p) * v for p, v in zip(parts, chain_var)], axis=0)
    rho = 1.0 - (w - acf) / var_plus
    rho[0] = 1.0
    # sums of adjacent pairs, truncated at the first negative, then made monotone
    pairs = []
    for t in range(0, n - 1, 2):
        p = rho[t] + rho[t + 1]
        if p < 0:
            break
        pairs.append(p)
    if not pairs:
        return float(total)
    pairs = np.minimum.accumulate(np.asarray(pairs))
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / math.log10(total)) if total > 10 else max(tau, 1e-12)
    return float(min(total, total / tau))


def split_rhat(chains) -> float | None:
    """Split-R-hat; ``None`` when only one chain is available."""
    parts = _as_chains(chains)
    if len(parts) < 2:
        return None
    n = min(p.size for p in parts)
    half = n // 2
    if half < 2:
        return None
    halves = []
    for p in parts:
        halves.append(p[:half])
        halves.append(p[n - half:n])
    x = np.vstack(halves)
    w = x.var(axis=1, ddof=1).mean()
    b = half * x.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (half - 1) / half * w + b / half
    return float(math.sqrt(var_plus / w))


def posterior_summary(chains) -> PosteriorSummary:
    """Median, 95% equal-tailed interval (linear interpolation), ESS and split-R-hat.

    ``chains`` is a list of per-chain sample vectors (or ChainOutput objects);
    a single 1-D array is treated as one chain.
    """
    parts = _as_chains(chains)
    pooled = np.concatenate(parts) if parts else np.empty(0)
    if pooled.size < MIN_SUMMARY_SAMPLES:
        raise InsufficientSamplesError(
            f"summaries need at least {MIN_SUMMARY_SAMPLES} samples, got {pooled.size}")
    lo, med, hi = np.quantile(pooled, [0.025, 0.5, 0.975], method="linear")
    return PosteriorSummary(
        median=float(med),
        ci_lower=float(min(lo, med)),
        ci_upper=float(max(hi, med)),
        ess=effective_sample_size(parts),
        rhat=split_rhat(parts),
        n_samples=int(pooled.size),
    )


def posterior_odds(bf10: float, prior_odds: float) -> float:
    if not (bf10 > 0 and prior_odds > 0):
        raise DomainError("Bayes factor and prior odds must be positive")
    return float(prior_odds * bf10)


# ---------------------------------------------------------------------------
# Parametric comparator
# ---------------------------------------------------------------------------


def t_statistic(x, y=None) -> tuple[float, float, float]:
    """Return ``(t, effective_n, df)`` for the one-sample or pooled two-sample t test."""
    x = as_sample(x, "x")
    if y is None:
        n = x.size
        if n < 2:
            raise InvalidDataError("one-sample t test needs n >= 2")
        sd = x.std(ddof=1)
        if not sd > 0:
            raise UndefinedStatisticError("differences have zero variance")
        return float(x.mean() / (sd / math.sqrt(n))), float(n), float(n - 1)
    y = as_sample(y, "y")
    nx, ny = x.size, y.size
    if nx < 2 or ny < 2:
        raise InvalidDataError("two-sample t test needs n >= 2 per group")
    df = nx + ny - 2
    pooled_var = ((nx - 1) * x.var(ddof=1) + (ny - 1) * y.var(ddof=1)) / df
    if not pooled_var > 0:
        raise UndefinedStatisticError("pooled variance is zero")
    eff_n = nx * ny / (nx + ny)
    t = (y.mean() - x.mean()) / math.sqrt(pooled_var / eff_n)
    return float(t), float(eff_n), float(df)


def jzs_bf10_from_t(t: float, eff_n: float, df: float,
                    cauchy_scale: float = 1.0 / math.sqrt(2.0)) -> float:
    """Default (Cauchy prior on effect size) t-test Bayes factor from a t value.

    Integrates the g-mixture representation, g ~ InverseGamma(1/2, r^2/2), over
    ``log g`` with adaptive quadrature.
    """
    if not cauchy_scale > 0:
        raise InvalidParameterError("Cauchy scale must be positive")
    r2 = cauchy_scale * cauchy_scale
    a = -(df + 1.0) / 2.0
    log_null = a * math.log1p(t * t / df)

    def integrand(log_g):
        g = math.exp(log_g)
        log_lik = (-0.5 * math.log1p(eff_n * g)
                   + a * math.log1p(t * t / ((1.0 + eff_n * g) * df)))
        # inverse-gamma(1/2, r^2/2) density in g, times the Jacobian g
        log_prior = 0.5 * math.log(r2 / (2.0 * math.pi)) - 0.5 * log_g - r2 / (2.0 * g)
        return math.exp(log_lik - log_null + log_prior)

    # the integrand is negligible outside a wide window around the prior mass
    val, _ = integrate.quad(integrand, -30.0, 30.0, epsabs=0.0, epsrel=1e-10, limit=500)
    return float(val)


def jzs_ttest_bf(x, y=None, cauchy_scale: float = 1.0 / math.sqrt(2.0)) -> float:
    """JZS Bayes factor BF10 for a one-sample (``y`` omitted) or two-sample t test."""
    t, eff_n, df = t_statistic(x, y)
    return jzs_bf10_from_t(t, eff_n, df, cauchy_scale)


def jzs_bf10_noncentral_oracle(t: float, eff_n: float, df: float,
                               cauchy_scale: float = 1.0 / math.sqrt(2.0)) -> float:
    """Independent route to the same Bayes factor: average the noncentral-t
    likelihood of ``t`` over the Cauchy prior on the effect size."""
    f = lambda d: stats.nct.pdf(t, df, d * math.sqrt(eff_n)) * stats.cauchy.pdf(d, 0, cauchy_scale)
    num = sum(integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-11, limit=500)[0]
              for lo, hi in ((-np.inf, -5), (-5, 0), (0, 5), (5, np.inf)))
    return float(num / stats.t.pdf(t, df))


# ---------------------------------------------------------------------------
# Plot grids
# ---------------------------------------------------------------------------


def _with_zero(grid: np.ndarray) -> np.ndarray:
    return np.unique(np.concatenate([grid, [0.0]]))


def delta_density_grid(chains: Sequence[ChainOutput], prior: PriorSpec = PriorSpec(),
                       points: int = 512) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid of (value, prior density, posterior density) for delta; always contains 0."""
    if points < 2:
        raise InvalidParameterError("a plot grid needs at least two points")
    mu = _pooled(chains, "conditional_mean")
    sd = _pooled(chains, "conditional_sd")
    delta = _pooled(chains, "parameter_samples")
    pad = 4.0 * float(np.median(sd))
    lo = min(float(np.quantile(delta, 0.0005)) - pad, -1e-3)
    hi = max(float(np.quantile(delta, 0.9995)) + pad, 1e-3)
    grid = _with_zero(np.linspace(lo, hi, points))
    prior_d = cauchy_pdf(grid, 0.0, prior.cauchy_scale)
    post_d = rao_blackwell_density(grid, chains)
    return grid, np.asarray(prior_d, dtype=float), post_d


def rho_density_grid(chains: Sequence[ChainOutput],
                     points: int = 512) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid over [-1, 1] of (rho, uniform prior density, reflected-KDE posterior)."""
    if points < 2:
        raise InvalidParameterError("a plot grid needs at least two points")
    rho = _pooled(chains, "parameter_samples")
    if rho.size < MIN_KDE_SAMPLES:
        raise InsufficientSamplesError("too few samples for a density estimate")
    grid = _with_zero(np.linspace(-1.0, 1.0, points))
    return grid, np.full(grid.size, UNIFORM_RHO_DENSITY), reflected_kde(grid, rho)



# ---------------------------------------------------------------------------
# Whole-test drivers
# ---------------------------------------------------------------------------

RHAT_WARN = 1.05
ESS_WARN = 400.0


@dataclass
class TestResult:
    """Everything reported for one test run; ``chains`` is kept for plot grids."""

    test: str
    n: dict
    observed: dict
    bayes_factor: BayesFactorResult
    summary: PosteriorSummary
    parameter: str
    prior: PriorSpec
    config: ChainConfig
    chains: list = None
    summary_rho_s: PosteriorSummary | None = None
    acceptance_rate: float | None = None
    warnings: list = None

    def density_grid(self, points: int = 512):
        if self.parameter == "delta":
            return delta_density_grid(self.chains, self.prior, points)
        return rho_density_grid(self.chains, points)


def _warnings(summary: PosteriorSummary) -> list[str]:
    out = []
    if summary.rhat is not None and summary.rhat > RHAT_WARN:
        out.append(f"split R-hat {summary.rhat:.3f} exceeds {RHAT_WARN}")
    if summary.ess < ESS_WARN:
        out.append(f"effective sample size {summary.ess:.0f} is below {ESS_WARN:.0f}")
    return out


def rank_sum_test(x, y, prior: PriorSpec = PriorSpec(), config=None) -> TestResult:
    """Latent-normal Wilcoxon rank sum test; delta is the standardized shift of y over x."""
    config = ChainConfig() if config is None else config
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    u = u_statistic(x, y)
    chains = run_chains(ranksum_chain, x, y, prior=prior, config=config)
    summary = posterior_summary(chains)
    return TestResult(
        test="ranksum",
        n={"x": int(x.size), "y": int(y.size)},
        observed={"U": u.u, "U_complement": u.u_complement,
                  "rank_biserial": rank_biserial(x, y)},
        bayes_factor=savage_dickey_delta(chains, prior),
        summary=summary,
        parameter="delta",
        prior=prior,
        config=config,
        chains=chains,
        warnings=_warnings(summary),
    )


def signed_rank_test(differences, prior: PriorSpec = PriorSpec(), config=None) -> TestResult:
    """Latent-normal Wilcoxon signed rank test on difference scores (zeros dropped)."""
    config = ChainConfig() if config is None else config
    dec = signed_rank_decomposition(differences)
    if dec.abs_ranks.size == 0:
        raise UndefinedStatisticError("all differences are zero")
    chains = run_chains(signedrank_chain, dec.differences, prior=prior, config=config)
    summary = posterior_summary(chains)
    warnings = _warnings(summary)
    if dec.n_zero_dropped:
        warnings.append(f"{dec.n_zero_dropped} zero difference(s) dropped")
    return TestResult(
        test="signedrank",
        n={"pairs": int(dec.abs_ranks.size + dec.n_zero_dropped),
           "used": int(dec.abs_ranks.size)},
        observed={"W": dec.w, "matched_rank_biserial": matched_rank_biserial(dec),
                  "n_zero_dropped": dec.n_zero_dropped},
        bayes_factor=savage_dickey_delta(chains, prior),
        summary=summary,
        parameter="delta",
        prior=prior,
        config=config,
        chains=chains,
        warnings=warnings,
    )


def spearman_test(x, y, config=None) -> TestResult:
    """Latent-normal test of Spearman's rho_s with a uniform prior on the latent rho."""
    config = ChainConfig() if config is None else config
    prior = PriorSpec.uniform()
    observed = spearman_rho(x, y)
    chains = run_chains(spearman_chain, x, y, prior=prior, config=config)
    summary = posterior_summary(chains)
    rho_s_chains = [kruskal_rho_to_rhos(c.parameter_samples) for c in chains]
    rates = [c.acceptance_rate for c in chains]
    return TestResult(
        test="spearman",
        n={"pairs": int(np.asarray(x).size)},
        observed={"rho_s": observed},
        bayes_factor=savage_dickey_rho(chains),
        summary=summary,
        parameter="rho",
        prior=prior,
        config=config,
        chains=chains,
        summary_rho_s=posterior_summary(rho_s_chains),
        acceptance_rate=float(np.mean(rates)),
        warnings=_warnings(summary),
    )
