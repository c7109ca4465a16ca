"""MCMC kernels for the latent-normal rank sum, signed rank and Spearman models.

Every chain works on data *levels* only, so strictly increasing transforms of
the input (sign-preserving odd transforms for differences) leave the output
bit-identical at a fixed seed.

Rank sum (per iteration): sweep z^x ~ N(-delta/2, 1) and z^y ~ N(delta/2, 1)
under the aggregated-rank truncation, additive recentring move, delta | z, g
and g | delta.  Signed rank: sweep z^d ~ N(delta, 1) under the sign/|d|-rank
truncation, multiplicative scale move, delta | z, g and g | delta.  Spearman:
sweep each margin given the other, one scale move per margin, then a
random-walk Metropolis step for rho on the Fisher-z scale that targets the
uniform prior on rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rngdist
from .augmentation import (
    OrdinalLayout,
    initial_latent,
    initial_signed_latent,
    joint_scale_move,
    scale_move,
    shift_move,
    sweep_ordinal,
    sweep_signed,
)
from .errors import (
    ConfigurationError,
    DomainError,
    InvalidDataError,
    InvalidParameterError,
    SampleTooSmallError,
    UndefinedStatisticError,
)
from .ranks import as_sample, dense_levels, midranks, signed_rank_decomposition
from .rngdist import RngStream

DEFAULT_CAUCHY_SCALE = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class PriorSpec:
    kind: str = "cauchy"
    cauchy_scale: float = DEFAULT_CAUCHY_SCALE

    def __post_init__(self):
        if self.kind not in ("cauchy", "uniform"):
            raise ConfigurationError(f"unknown prior kind {self.kind!r}")
        if not (math.isfinite(self.cauchy_scale) and self.cauchy_scale > 0):
            raise ConfigurationError(f"Cauchy scale must be positive, got {self.cauchy_scale!r}")

    @classmethod
    def cauchy(cls, scale: float = DEFAULT_CAUCHY_SCALE) -> "PriorSpec":
        return cls("cauchy", scale)

    @classmethod
    def uniform(cls) -> "PriorSpec":
        return cls("uniform")


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 5000
    burnin: int = 1000
    chains: int = 4
    thin: int = 1
    seed: int = 1
    scale_step: float = 0.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be positive")
        if self.burnin < 0:
            raise ConfigurationError("burnin must be nonnegative")
        if self.chains < 1:
            raise ConfigurationError("chains must be positive")
        if self.thin < 1:
            raise ConfigurationError("thin must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if not self.scale_step >= 0:
            raise ConfigurationError("scale_step must be nonnegative")


@dataclass
class ChainOutput:
    parameter_samples: np.ndarray
    chain_id: int
    conditional_mean: np.ndarray | None = None
    conditional_sd: np.ndarray | None = None
    acceptance_rate: float | None = None
    scale_acceptance_rate: float | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.parameter_samples.size


# ---------------------------------------------------------------------------
# Closed-form conditionals
# ---------------------------------------------------------------------------


@njit(cache=True)
def _delta_twosample(sum_x, sum_y, n, g):
    denom = g * n + 4.0
    return 2.0 * g * (sum_y - sum_x) / denom, 4.0 * g / denom


@njit(cache=True)
def _delta_onesample(sum_d, n, g):
    denom = g * n + 1.0
    return g * sum_d / denom, g / denom


def delta_conditional_twosample(z_x, z_y, g: float) -> tuple[float, float]:
    """Mean and variance of delta | z^x, z^y, g for the rank sum model."""
    if not g > 0:
        raise InvalidParameterError("g must be positive")
    z_x = np.asarray(getattr(z_x, "z", z_x), dtype=float)
    z_y = np.asarray(getattr(z_y, "z", z_y), dtype=float)
    mu, var = _delta_twosample(float(z_x.sum()), float(z_y.sum()), float(z_x.size + z_y.size), float(g))
    return float(mu), float(var)


def delta_conditional_onesample(z_d, g: float) -> tuple[float, float]:
    """Mean and variance of delta | z^d, g for the signed rank model."""
    if not g > 0:
        raise InvalidParameterError("g must be positive")
    z_d = np.asarray(getattr(z_d, "z", z_d), dtype=float)
    mu, var = _delta_onesample(float(z_d.sum()), float(z_d.size), float(g))
    return float(mu), float(var)


def g_conditional(delta: float, gamma: float, stream: RngStream) -> float:
    """Draw g | delta ~ InverseGamma(1, (delta^2 + gamma^2) / 2)."""
    if not gamma > 0:
        raise InvalidParameterError("gamma must be positive")
    return rngdist.inverse_gamma_sample(stream, 1.0, 0.5 * (delta * delta + gamma * gamma))


@njit(cache=True)
def _bvn_loglik(sxx, syy, sxy, n, rho):
    one_m = 1.0 - rho * rho
    return (-n * math.log(2.0 * math.pi) - 0.5 * n * math.log(one_m)
            - (sxx - 2.0 * rho * sxy + syy) / (2.0 * one_m))


def bivariate_normal_loglik(z_x, z_y, rho: float) -> float:
    """Log density of pairs under the standard bivariate normal with correlation rho."""
    if not -1.0 < rho < 1.0:
        raise DomainError(f"|rho| must be below 1, got {rho!r}")
    x = np.asarray(getattr(z_x, "z", z_x), dtype=float)
    y = np.asarray(getattr(z_y, "z", z_y), dtype=float)
    if x.shape != y.shape:
        raise InvalidDataError("latent vectors differ in length")
    return float(_bvn_loglik(float(x @ x), float(y @ y), float(x @ y), float(x.size), float(rho)))


@njit(cache=True)
def rho_log_acceptance(sxx, syy, sxy, n, rho, rho_new):
    """Log Metropolis ratio for a Fisher-z random walk targeting a uniform prior on rho."""
    return (_bvn_loglik(sxx, syy, sxy, n, rho_new) - _bvn_loglik(sxx, syy, sxy, n, rho)
            + math.log1p(-rho_new * rho_new) - math.log1p(-rho * rho))


# ---------------------------------------------------------------------------
# Single iterations (shared by chains and the Geweke checks)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _rescale(s, lvl_max, lvl_min):
    for k in range(lvl_max.shape[0]):
        lvl_max[k] *= s
        lvl_min[k] *= s


@njit(cache=True)
def ranksum_iteration(z, nx, level_of, offsets, members, lvl_max, lvl_min, means, coef,
                      delta, g, gamma, st):
    n = z.shape[0]
    for i in range(n):
        means[i] = coef[i] * delta
    sweep_ordinal(z, level_of, offsets, members, lvl_max, lvl_min, means, 1.0, st)
    shift_move(z, nx, delta, lvl_max, lvl_min, st)
    if n > 0:
        s = joint_scale_move(z, coef, delta, g, st)
        delta *= s
        _rescale(s, lvl_max, lvl_min)
    sum_x = 0.0
    sum_y = 0.0
    for i in range(n):
        if i < nx:
            sum_x += z[i]
        else:
            sum_y += z[i]
    mu, var = _delta_twosample(sum_x, sum_y, float(n), g)
    sd = math.sqrt(var)
    delta = mu + sd * rngdist.std_normal(st)
    g = rngdist.inverse_gamma(1.0, 0.5 * (delta * delta + gamma * gamma), st)
    return delta, g, mu, sd


@njit(cache=True)
def signedrank_iteration(z, absz, level_of, offsets, members, lvl_max, lvl_min, signs,
                         coef, delta, g, gamma, st):
    # coef is a vector of ones: every latent difference has mean delta
    n = z.shape[0]
    sweep_signed(z, absz, level_of, offsets, members, lvl_max, lvl_min, signs, delta, st)
    s = joint_scale_move(z, coef, delta, g, st)
    delta *= s
    for i in range(n):
        absz[i] *= s
    _rescale(s, lvl_max, lvl_min)
    sum_d = 0.0
    for i in range(n):
        sum_d += z[i]
    mu, var = _delta_onesample(sum_d, float(n), g)
    sd = math.sqrt(var)
    delta = mu + sd * rngdist.std_normal(st)
    g = rngdist.inverse_gamma(1.0, 0.5 * (delta * delta + gamma * gamma), st)
    return delta, g, mu, sd


@njit(cache=True)
def _scale_margin(z, other, rho, sd, step_sd, location, lvl_max, lvl_min, st):
    for i in range(z.shape[0]):
        location[i] = rho * other[i]
    s = scale_move(z, location, sd, step_sd, st)
    if s != 1.0:
        _rescale(s, lvl_max, lvl_min)
    return s != 1.0


@njit(cache=True)
def spearman_iteration(zx, zy, lx, ox, mx, xmax, xmin, ly, oy, my, ymax, ymin, buf,
                       rho, step_sd, proposal_sd, st):
    n = zx.shape[0]
    sd = math.sqrt(1.0 - rho * rho)
    for i in range(n):
        buf[i] = rho * zy[i]
    sweep_ordinal(zx, lx, ox, mx, xmax, xmin, buf, sd, st)
    for i in range(n):
        buf[i] = rho * zx[i]
    sweep_ordinal(zy, ly, oy, my, ymax, ymin, buf, sd, st)
    _scale_margin(zx, zy, rho, sd, step_sd, buf, xmax, xmin, st)
    _scale_margin(zy, zx, rho, sd, step_sd, buf, ymax, ymin, st)
    sxx = 0.0
    syy = 0.0
    sxy = 0.0
    for i in range(n):
        sxx += zx[i] * zx[i]
        syy += zy[i] * zy[i]
        sxy += zx[i] * zy[i]
    rho_new = math.tanh(math.atanh(rho) + proposal_sd * rngdist.std_normal(st))
    if not -1.0 < rho_new < 1.0:
        rngdist.uniform(st)
        return rho, False
    log_alpha = rho_log_acceptance(sxx, syy, sxy, float(n), rho, rho_new)
    if math.log(rngdist.uniform(st)) < log_alpha:
        return rho_new, True
    return rho, False


# ---------------------------------------------------------------------------
# Chain drivers
# ---------------------------------------------------------------------------


@njit(cache=True)
def _run_ranksum(z, nx, level_of, offsets, members, lvl_max, lvl_min, gamma,
                 burnin, iterations, thin, st, out_delta, out_mu, out_sd):
    n = z.shape[0]
    means = np.empty(n)
    coef = np.empty(n)
    for i in range(n):
        coef[i] = -0.5 if i < nx else 0.5
    delta = 0.0
    g = gamma * gamma
    kept = 0
    total = burnin + iterations * thin
    for it in range(total):
        delta, g, mu, sd = ranksum_iteration(z, nx, level_of, offsets, members, lvl_max,
                                             lvl_min, means, coef, delta, g, gamma, st)
        if it >= burnin and (it - burnin) % thin == thin - 1:
            out_delta[kept] = delta
            out_mu[kept] = mu
            out_sd[kept] = sd
            kept += 1


@njit(cache=True)
def _run_signedrank(z, level_of, offsets, members, lvl_max, lvl_min, signs, gamma,
                    burnin, iterations, thin, st, out_delta, out_mu, out_sd):
    n = z.shape[0]
    absz = np.abs(z)
    coef = np.ones(n)
    delta = 0.0
    g = gamma * gamma
    kept = 0
    total = burnin + iterations * thin
    for it in range(total):
        delta, g, mu, sd = signedrank_iteration(
            z, absz, level_of, offsets, members, lvl_max, lvl_min, signs, coef,
            delta, g, gamma, st)
        if it >= burnin and (it - burnin) % thin == thin - 1:
            out_delta[kept] = delta
            out_mu[kept] = mu
            out_sd[kept] = sd
            kept += 1


@njit(cache=True)
def _run_spearman(zx, zy, lx, ox, mx, xmax, xmin, ly, oy, my, ymax, ymin, step_sd,
                  proposal_sd, burnin, iterations, thin, st, out_rho):
    buf = np.empty(zx.shape[0])
    rho = 0.0
    kept = 0
    accepted = 0
    total = burnin + iterations * thin
    for it in range(total):
        rho, ok = spearman_iteration(zx, zy, lx, ox, mx, xmax, xmin, ly, oy, my, ymax, ymin,
                                     buf, rho, step_sd, proposal_sd, st)
        if ok:
            accepted += 1
        if it >= burnin and (it - burnin) % thin == thin - 1:
            out_rho[kept] = rho
            kept += 1
    return accepted / total


def _stream(config: ChainConfig, chain_id: int) -> RngStream:
    return RngStream(config.seed, chain_id)


def _outputs(config: ChainConfig):
    return (np.empty(config.iterations), np.empty(config.iterations), np.empty(config.iterations))


def _require_cauchy(prior: PriorSpec):
    if prior.kind != "cauchy":
        raise ConfigurationError("this test needs a Cauchy prior on delta")


def ranksum_chain(x, y, prior: PriorSpec = PriorSpec(), config: ChainConfig = ChainConfig(),
                  chain_id: int = 0) -> ChainOutput:
    """Run one chain of the latent-normal rank sum sampler (delta = location of y minus x)."""
    _require_cauchy(prior)
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    pooled = np.concatenate([x, y])
    layout = OrdinalLayout(dense_levels(pooled))
    z = initial_latent(midranks(pooled))
    layout.refresh(z)
    out_delta, out_mu, out_sd = _outputs(config)
    _run_ranksum(z, x.size, layout.level_of, layout.offsets, layout.members, layout.lvl_max,
                 layout.lvl_min, float(prior.cauchy_scale), config.burnin, config.iterations,
                 config.thin, _stream(config, chain_id).state, out_delta, out_mu, out_sd)
    return ChainOutput(out_delta, chain_id, out_mu, out_sd)


def signedrank_chain(differences, prior: PriorSpec = PriorSpec(),
                     config: ChainConfig = ChainConfig(), chain_id: int = 0) -> ChainOutput:
    """Run one chain of the latent-normal signed rank sampler on difference scores.

    Zero differences are dropped before the run.
    """
    _require_cauchy(prior)
    dec = signed_rank_decomposition(differences)
    if dec.abs_ranks.size == 0:
        raise UndefinedStatisticError("all differences are zero")
    layout = OrdinalLayout(dense_levels(np.abs(dec.differences)))
    signs = dec.signs.astype(np.int64)
    z = initial_signed_latent(dec.abs_ranks, signs.astype(float))
    layout.refresh(np.abs(z))
    out_delta, out_mu, out_sd = _outputs(config)
    _run_signedrank(z, layout.level_of, layout.offsets, layout.members, layout.lvl_max,
                    layout.lvl_min, signs, float(prior.cauchy_scale), config.burnin,
                    config.iterations, config.thin, _stream(config, chain_id).state,
                    out_delta, out_mu, out_sd)
    return ChainOutput(out_delta, chain_id, out_mu, out_sd,
                       extra={"n_zero_dropped": dec.n_zero_dropped})


def spearman_chain(x, y, prior: PriorSpec = PriorSpec.uniform(),
                   config: ChainConfig = ChainConfig(), chain_id: int = 0) -> ChainOutput:
    """Run one Metropolis-within-Gibbs chain for the latent correlation rho."""
    if prior.kind != "uniform":
        raise ConfigurationError("Spearman's test needs the uniform prior on rho")
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    if x.size != y.size:
        raise InvalidDataError(f"samples differ in length ({x.size} vs {y.size})")
    n = x.size
    if n <= 3:
        raise SampleTooSmallError(f"Spearman sampler needs n >= 4, got {n}")
    lx = OrdinalLayout(dense_levels(x))
    ly = OrdinalLayout(dense_levels(y))
    if lx.n_levels < 2 or ly.n_levels < 2:
        raise UndefinedStatisticError("a margin is constant")
    zx = initial_latent(midranks(x))
    zy = initial_latent(midranks(y))
    lx.refresh(zx)
    ly.refresh(zy)
    out_rho = np.empty(config.iterations)
    rate = _run_spearman(zx, zy, lx.level_of, lx.offsets, lx.members, lx.lvl_max, lx.lvl_min,
                         ly.level_of, ly.offsets, ly.members, ly.lvl_max, ly.lvl_min,
                         float(config.scale_step), 1.0 / math.sqrt(n - 3), config.burnin,
                         config.iterations, config.thin, _stream(config, chain_id).state, out_rho)
    return ChainOutput(out_rho, chain_id, acceptance_rate=float(rate))


@njit(cache=True)
def _run_prior(gamma, burnin, iterations, thin, st, out_delta, out_mu, out_sd):
    delta = 0.0
    g = gamma * gamma
    kept = 0
    for it in range(burnin + iterations * thin):
        mu = 0.0
        sd = math.sqrt(g)
        delta = sd * rngdist.std_normal(st)
        g = rngdist.inverse_gamma(1.0, 0.5 * (delta * delta + gamma * gamma), st)
        if it >= burnin and (it - burnin) % thin == thin - 1:
            out_delta[kept] = delta
            out_mu[kept] = mu
            out_sd[kept] = sd
            kept += 1


def cauchy_prior_chain(prior: PriorSpec = PriorSpec(), config: ChainConfig = ChainConfig(),
                       chain_id: int = 0) -> ChainOutput:
    """The delta/g Gibbs cycle with no observations; its delta marginal is the Cauchy prior."""
    _require_cauchy(prior)
    out_delta, out_mu, out_sd = _outputs(config)
    _run_prior(float(prior.cauchy_scale), config.burnin, config.iterations, config.thin,
               _stream(config, chain_id).state, out_delta, out_mu, out_sd)
    return ChainOutput(out_delta, chain_id, out_mu, out_sd)


def run_chains(chain_fn, *args, prior: PriorSpec, config: ChainConfig) -> list[ChainOutput]:
    """Run ``config.chains`` independent chains; chain ``k`` uses stream ``(seed, k)``."""
    return [chain_fn(*args, prior=prior, config=config, chain_id=k) for k in range(config.chains)]
