"""Successive-conditional (Geweke) simulators for the three sampler kernels.

Each cycle draws fresh latent data from the model at the current parameter,
reduces them to ranks, and applies one transition of the production kernel.
If the kernel leaves the posterior invariant, the parameter sequence has the
prior as its stationary marginal.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy import stats

from . import rngdist
from .rngdist import RngStream
from .samplers import (
    DEFAULT_CAUCHY_SCALE,
    ranksum_iteration,
    signedrank_iteration,
    spearman_iteration,
)


@njit(cache=True)
def _layout_from_distinct(values, level_of, offsets, members, lvl_max, lvl_min):
    order = np.argsort(values)
    for j in range(order.shape[0]):
        i = order[j]
        level_of[i] = j
        members[j] = i
        offsets[j] = j
        lvl_max[j] = values[i]
        lvl_min[j] = values[i]
    offsets[order.shape[0]] = order.shape[0]


@njit(cache=True)
def _geweke_ranksum(n_per_group, gamma, cycles, transitions, st):
    n = 2 * n_per_group
    z = np.empty(n)
    means = np.empty(n)
    coef = np.empty(n)
    for i in range(n):
        coef[i] = -0.5 if i < n_per_group else 0.5
    level_of = np.empty(n, dtype=np.int64)
    offsets = np.empty(n + 1, dtype=np.int64)
    members = np.empty(n, dtype=np.int64)
    lvl_max = np.empty(n)
    lvl_min = np.empty(n)
    out = np.empty(cycles)
    g = rngdist.inverse_gamma(0.5, 0.5 * gamma * gamma, st)
    delta = math.sqrt(g) * rngdist.std_normal(st)
    for c in range(cycles):
        for i in range(n):
            m = -0.5 * delta if i < n_per_group else 0.5 * delta
            z[i] = m + rngdist.std_normal(st)
        _layout_from_distinct(z, level_of, offsets, members, lvl_max, lvl_min)
        for _ in range(transitions):
            delta, g, mu, sd = ranksum_iteration(z, n_per_group, level_of, offsets, members,
                                                 lvl_max, lvl_min, means, coef, delta, g, gamma,
                                                 st)
        out[c] = delta
    return out


@njit(cache=True)
def _geweke_signedrank(n, gamma, cycles, transitions, st):
    z = np.empty(n)
    absz = np.empty(n)
    signs = np.empty(n, dtype=np.int64)
    coef = np.ones(n)
    level_of = np.empty(n, dtype=np.int64)
    offsets = np.empty(n + 1, dtype=np.int64)
    members = np.empty(n, dtype=np.int64)
    lvl_max = np.empty(n)
    lvl_min = np.empty(n)
    out = np.empty(cycles)
    g = rngdist.inverse_gamma(0.5, 0.5 * gamma * gamma, st)
    delta = math.sqrt(g) * rngdist.std_normal(st)
    for c in range(cycles):
        for i in range(n):
            z[i] = delta + rngdist.std_normal(st)
            absz[i] = abs(z[i])
            signs[i] = 1 if z[i] > 0 else -1
        _layout_from_distinct(absz, level_of, offsets, members, lvl_max, lvl_min)
        for _ in range(transitions):
            delta, g, mu, sd = signedrank_iteration(
                z, absz, level_of, offsets, members, lvl_max, lvl_min, signs, coef,
                delta, g, gamma, st)
        out[c] = delta
    return out


@njit(cache=True)
def _geweke_spearman(n, step_sd, cycles, transitions, st):
    zx = np.empty(n)
    zy = np.empty(n)
    buf = np.empty(n)
    lx = np.empty(n, dtype=np.int64)
    ox = np.empty(n + 1, dtype=np.int64)
    mx = np.empty(n, dtype=np.int64)
    xmax = np.empty(n)
    xmin = np.empty(n)
    ly = np.empty(n, dtype=np.int64)
    oy = np.empty(n + 1, dtype=np.int64)
    my = np.empty(n, dtype=np.int64)
    ymax = np.empty(n)
    ymin = np.empty(n)
    out = np.empty(cycles)
    proposal_sd = 1.0 / math.sqrt(n - 3.0)
    rho = 2.0 * rngdist.uniform(st) - 1.0
    for c in range(cycles):
        resid = math.sqrt(1.0 - rho * rho)
        for i in range(n):
            zx[i] = rngdist.std_normal(st)
            zy[i] = rho * zx[i] + resid * rngdist.std_normal(st)
        _layout_from_distinct(zx, lx, ox, mx, xmax, xmin)
        _layout_from_distinct(zy, ly, oy, my, ymax, ymin)
        for _ in range(transitions):
            rho, ok = spearman_iteration(zx, zy, lx, ox, mx, xmax, xmin, ly, oy, my, ymax,
                                         ymin, buf, rho, step_sd, proposal_sd, st)
        out[c] = rho
    return out


def geweke_ranksum(n_per_group: int = 5, cycles: int = 100_000,
                   gamma: float = DEFAULT_CAUCHY_SCALE, seed: int = 2024,
                   transitions: int = 1) -> np.ndarray:
    """Parameter trace of the rank sum kernel; ``transitions`` kernel steps per cycle."""
    return _geweke_ranksum(int(n_per_group), float(gamma), int(cycles), int(transitions),
                           RngStream(seed, 0).state)


def geweke_signedrank(n: int = 5, cycles: int = 100_000, gamma: float = DEFAULT_CAUCHY_SCALE,
                      seed: int = 2024, transitions: int = 1) -> np.ndarray:
    return _geweke_signedrank(int(n), float(gamma), int(cycles), int(transitions),
                              RngStream(seed, 1).state)


def geweke_spearman(n: int = 5, cycles: int = 100_000, step_sd: float = 0.5,
                    seed: int = 2024, transitions: int = 1) -> np.ndarray:
    return _geweke_spearman(int(n), float(step_sd), int(cycles), int(transitions),
                            RngStream(seed, 2).state)


def ks_distance_cauchy(samples, gamma: float = DEFAULT_CAUCHY_SCALE) -> float:
    return float(stats.kstest(samples, stats.cauchy(0.0, gamma).cdf).statistic)


def ks_distance_uniform(samples) -> float:
    return float(stats.kstest(samples, stats.uniform(-1.0, 2.0).cdf).statistic)
