"""Data generators and the grid runner for the robustness simulations.

Univariate families are used for the two-sample and paired designs (the shift
is added on the raw scale of the family's standard parameterization).  The
four copulas generate bivariate data with a prescribed population Spearman
correlation; the copula parameter is found by bisection on ``copula_rho_s``.
"""

from __future__ import annotations

import csv
import functools
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import integrate

from . import rngdist
from .errors import ConfigurationError, DomainError, LatentRankError
from .inference import (
    jzs_ttest_bf,
    kruskal_rho_to_rhos,
    rhos_to_rho,
    savage_dickey_delta,
    savage_dickey_rho,
)
from .ranks import matched_rank_biserial, rank_biserial, signed_rank_decomposition, spearman_rho
from .rngdist import RngStream, derive_seed
from .samplers import (
    ChainConfig,
    PriorSpec,
    ranksum_chain,
    run_chains,
    signedrank_chain,
    spearman_chain,
)

FAMILIES = ("normal", "skew-normal", "cauchy", "logistic", "uniform")
COPULAS = ("gaussian", "clayton", "frank", "gumbel")
SCENARIOS = ("same-shape", "normal-vs-other")
GRID_COLUMNS = ("test", "family", "scenario", "n", "effect", "replicate", "statistic",
                "log_bf10_latent", "log_bf10_comparator")

# Gauss-Legendre nodes for the copula integral; well above the 64 x 64 floor
_GL_NODES = 200


@dataclass(frozen=True)
class DistributionSpec:
    family: str = "normal"
    shape: float = 20.0
    shift: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if not (math.isfinite(self.shift) and math.isfinite(self.shape)):
            raise ConfigurationError("shift and shape must be finite")


@njit(cache=True)
def _sample_family(code, shape, shift, n, st):
    out = np.empty(n)
    if code == 1:
        lam = shape / math.sqrt(1.0 + shape * shape)
        rest = math.sqrt(1.0 - lam * lam)
    for i in range(n):
        if code == 0:
            v = rngdist.std_normal(st)
        elif code == 1:
            v = lam * abs(rngdist.std_normal(st)) + rest * rngdist.std_normal(st)
        elif code == 2:
            v = math.tan(math.pi * (rngdist.uniform(st) - 0.5))
        elif code == 3:
            u = rngdist.uniform(st)
            v = math.log(u) - math.log1p(-u)
        else:
            v = rngdist.uniform(st)
        out[i] = v + shift
    return out


def sample_univariate(spec: DistributionSpec, n: int, stream: RngStream) -> np.ndarray:
    """Draw ``n`` i.i.d. values from ``spec.family`` shifted by ``spec.shift``.

    The skew-normal uses the representation ``lam |U0| + sqrt(1 - lam^2) U1``
    with ``lam = shape / sqrt(1 + shape^2)``.
    """
    if n < 1:
        raise ConfigurationError("n must be positive")
    return _sample_family(FAMILIES.index(spec.family), float(spec.shape), float(spec.shift),
                          int(n), stream.state)


# ---------------------------------------------------------------------------
# Copulas
# ---------------------------------------------------------------------------


def _independent(family: str, theta: float) -> bool:
    return theta == (1.0 if family == "gumbel" else 0.0)


@dataclass(frozen=True)
class CopulaSpec:
    """Copula family and parameter.

    Independence is ``theta = 0`` for gaussian, clayton and frank and
    ``theta = 1`` for gumbel (the limits of each family).
    """

    family: str
    theta: float
    target_rho_s: float | None = None

    def __post_init__(self):
        if self.family not in COPULAS:
            raise ConfigurationError(f"unknown copula {self.family!r}; choose from {COPULAS}")
        t = self.theta
        if not math.isfinite(t):
            raise DomainError("copula parameter must be finite")
        ok = {
            "gaussian": -1.0 < t < 1.0,
            "clayton": t >= 0.0,
            "frank": True,
            "gumbel": t >= 1.0,
        }[self.family]
        if not ok:
            raise DomainError(f"theta={t!r} is not admissible for the {self.family} copula")

    @property
    def independent(self) -> bool:
        return _independent(self.family, self.theta)


def _debye(k: int, x: float) -> float:
    if x == 0:
        return 1.0
    val, _ = integrate.quad(lambda t: t ** k / math.expm1(t) if t > 0 else 0.0 ** (k - 1),
                            0.0, x, epsabs=0.0, epsrel=1e-13, limit=200)
    return k / x ** k * val


def _frank_rho_s(theta: float) -> float:
    if abs(theta) < 1e-8:
        return theta / 6.0
    a = abs(theta)
    value = 1.0 - 12.0 / a * (_debye(1, a) - _debye(2, a))
    return math.copysign(value, theta)


def _copula_cdf(family: str, theta: float, u, v):
    if family == "clayton":
        return np.maximum(u ** -theta + v ** -theta - 1.0, 0.0) ** (-1.0 / theta)
    # gumbel
    s = (-np.log(u)) ** theta + (-np.log(v)) ** theta
    return np.exp(-s ** (1.0 / theta))


def _quadrature_rho_s(family: str, theta: float, nodes: int = _GL_NODES) -> float:
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(t, t, indexing="ij")
    c = _copula_cdf(family, theta, u, v)
    return float(12.0 * (w @ c @ w) - 3.0)


def copula_rho_s(spec: CopulaSpec) -> float:
    """Population Spearman correlation ``12 * integral C(u, v) du dv - 3`` of a copula."""
    if spec.independent:
        return 0.0
    if spec.family == "gaussian":
        return kruskal_rho_to_rhos(spec.theta)
    if spec.family == "frank":
        return _frank_rho_s(spec.theta)
    return _quadrature_rho_s(spec.family, spec.theta)


@functools.lru_cache(maxsize=256)
def invert_rho_s(family: str, target_rho_s: float, tol: float = 1e-6) -> CopulaSpec:
    """Copula parameter whose population Spearman correlation equals ``target_rho_s``."""
    if family not in COPULAS:
        raise ConfigurationError(f"unknown copula {family!r}")
    if not -1.0 < target_rho_s < 1.0:
        raise ConfigurationError("target Spearman correlation must lie in (-1, 1)")
    if target_rho_s == 0.0:
        return CopulaSpec(family, 1.0 if family == "gumbel" else 0.0, 0.0)
    if family == "gaussian":
        return CopulaSpec(family, rhos_to_rho(target_rho_s), target_rho_s)
    if family in ("clayton", "gumbel") and target_rho_s < 0:
        raise ConfigurationError(f"the {family} copula only reaches positive Spearman correlation")
    if abs(target_rho_s) > 0.995:
        raise ConfigurationError("target Spearman correlation too close to 1")

    lo = 1.0 if family == "gumbel" else 0.0
    f = lambda th: copula_rho_s(CopulaSpec(family, th)) - abs(target_rho_s)
    hi = lo + 1.0
    while f(hi) < 0:
        lo, hi = hi, lo + 2.0 * (hi - lo) + 1.0
        if hi > 1e4:
            raise ConfigurationError("could not bracket the target correlation")
    theta = 0.5 * (lo + hi)
    for _ in range(200):
        theta = 0.5 * (lo + hi)
        fm = f(theta)
        if abs(fm) < tol or hi - lo < 1e-12:
            break
        if fm < 0:
            lo = theta
        else:
            hi = theta
    if family == "frank" and target_rho_s < 0:
        theta = -theta
    return CopulaSpec(family, theta, target_rho_s)


@njit(cache=True)
def _positive_stable(alpha, st):
    # Kanter's representation of a totally skewed alpha-stable variable with
    # Laplace transform exp(-s^alpha)
    u = math.pi * rngdist.uniform(st)
    e = rngdist.std_exponential(st)
    a = (math.sin(alpha * u) / math.sin(u) ** (1.0 / alpha)
         * (math.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha))
    return a


@njit(cache=True)
def _copula_kernel(code, theta, n, st):
    u = np.empty(n)
    v = np.empty(n)
    for i in range(n):
        if code == -1:
            u[i] = rngdist.uniform(st)
            v[i] = rngdist.uniform(st)
        elif code == 0:
            z1 = rngdist.std_normal(st)
            z2 = theta * z1 + math.sqrt(1.0 - theta * theta) * rngdist.std_normal(st)
            u[i] = 0.5 * math.erfc(-z1 / math.sqrt(2.0))
            v[i] = 0.5 * math.erfc(-z2 / math.sqrt(2.0))
        elif code == 1:
            w = rngdist.std_gamma(1.0 / theta, st)
            u[i] = (1.0 + rngdist.std_exponential(st) / w) ** (-1.0 / theta)
            v[i] = (1.0 + rngdist.std_exponential(st) / w) ** (-1.0 / theta)
        elif code == 2:
            a = rngdist.uniform(st)
            w = rngdist.uniform(st)
            u[i] = a
            em = math.expm1(-theta)
            ea = math.exp(-theta * a)
            v[i] = -math.log1p(w * em / (w + (1.0 - w) * ea)) / theta
        else:
            alpha = 1.0 / theta
            s = _positive_stable(alpha, st)
            u[i] = math.exp(-(rngdist.std_exponential(st) / s) ** alpha)
            v[i] = math.exp(-(rngdist.std_exponential(st) / s) ** alpha)
    return u, v


def copula_sample(spec: CopulaSpec, n: int, stream: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """``n`` i.i.d. pairs on the unit square from the copula in ``spec``."""
    if n < 1:
        raise ConfigurationError("n must be positive")
    code = -1 if spec.independent else COPULAS.index(spec.family)
    return _copula_kernel(code, float(spec.theta), int(n), stream.state)


# ---------------------------------------------------------------------------
# Simulation grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationGridSpec:
    effect_values: tuple = (0.0, 0.5, 1.5)
    n_values: tuple = (10, 20, 50)
    replicates: int = 100
    scenario: str = "same-shape"
    family: str = "logistic"
    shape: float = 20.0
    seed: int = 1
    record_runtime: bool = False

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigurationError("replicates must be positive")
        if not self.n_values or any(int(n) < 1 for n in self.n_values):
            raise ConfigurationError("every n must be positive")
        if not self.effect_values:
            raise ConfigurationError("at least one effect value is needed")
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}")
        if self.family not in FAMILIES + COPULAS:
            raise ConfigurationError(f"unknown family {self.family!r}")


@dataclass
class GridRow:
    test: str
    family: str
    scenario: str
    n: int
    effect: float
    replicate: int
    statistic: float
    log_bf10_latent: float
    log_bf10_comparator: float
    runtime: float | None = field(default=None)


def _groups(grid: SimulationGridSpec, n: int, effect: float, stream: RngStream):
    first = "normal" if grid.scenario == "normal-vs-other" else grid.family
    x = sample_univariate(DistributionSpec(first, grid.shape, 0.0), n, stream)
    y = sample_univariate(DistributionSpec(grid.family, grid.shape, effect), n, stream)
    return x, y


def _replicate(test, grid, n, effect, stream, prior, config):
    if test == "ranksum":
        x, y = _groups(grid, n, effect, stream)
        chains = run_chains(ranksum_chain, x, y, prior=prior, config=config)
        # positive statistic <-> y above x, matching the sign of delta
        stat = -rank_biserial(x, y)
        bf = savage_dickey_delta(chains, prior)
        comp = math.log(jzs_ttest_bf(x, y, prior.cauchy_scale))
    elif test == "signedrank":
        x, y = _groups(grid, n, effect, stream)
        d = y - x
        dec = signed_rank_decomposition(d)
        chains = run_chains(signedrank_chain, dec.differences, prior=prior, config=config)
        stat = matched_rank_biserial(dec)
        bf = savage_dickey_delta(chains, prior)
        comp = math.log(jzs_ttest_bf(d, None, prior.cauchy_scale))
    else:
        spec = invert_rho_s(grid.family, effect) if grid.family in COPULAS else None
        if spec is None:
            raise ConfigurationError("Spearman grids need a copula family")
        u, v = copula_sample(spec, n, stream)
        chains = run_chains(spearman_chain, u, v, prior=PriorSpec.uniform(), config=config)
        stat = spearman_rho(u, v)
        bf = savage_dickey_rho(chains)
        comp = float("nan")
    return stat, bf.log_bf10, comp


def run_grid(grid: SimulationGridSpec, test: str, prior: PriorSpec = PriorSpec(),
             config: ChainConfig = ChainConfig()) -> list[GridRow]:
    """One row per replicate, ordered by (effect, n, replicate).

    Each replicate's data stream and chain seed are derived from
    ``(grid.seed, cell index, replicate index)``, so rows do not depend on the
    order in which replicates are computed.
    """
    if test not in ("ranksum", "signedrank", "spearman"):
        raise ConfigurationError(f"unknown test {test!r}")
    if test == "spearman" and min(grid.n_values) < 4:
        raise ConfigurationError("Spearman grids need n >= 4")
    rows = []
    cell = 0
    for effect in grid.effect_values:
        for n in grid.n_values:
            for rep in range(grid.replicates):
                data_seed = derive_seed(grid.seed, cell, rep, 0)
                chain_cfg = ChainConfig(iterations=config.iterations, burnin=config.burnin,
                                        chains=config.chains, thin=config.thin,
                                        seed=derive_seed(grid.seed, cell, rep, 1),
                                        scale_step=config.scale_step)
                started = time.perf_counter()
                try:
                    stat, log_bf, comp = _replicate(test, grid, int(n), float(effect),
                                                    RngStream(data_seed), prior, chain_cfg)
                except LatentRankError:
                    # degenerate replicate (e.g. all differences zero)
                    stat, log_bf, comp = float("nan"), float("nan"), float("nan")
                elapsed = time.perf_counter() - started
                rows.append(GridRow(test, grid.family, grid.scenario, int(n), float(effect),
                                    rep, float(stat), float(log_bf), float(comp),
                                    elapsed if grid.record_runtime else None))
            cell += 1
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def grid_to_csv(rows: list[GridRow], record_runtime: bool = False) -> str:
    """Serialize grid rows; the ``runtime`` column is present only when requested."""
    header = list(GRID_COLUMNS) + (["runtime"] if record_runtime else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([_fmt(getattr(r, h)) for h in header])
    return buf.getvalue()
