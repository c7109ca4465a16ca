"""Latent-normal data augmentation: truncation bounds, Gibbs sweeps, group moves.

Observed data enter only through *levels*: a dense 0-based ranking in which
tied observations share a level.  The truncation interval of latent ``z_i`` at
level ``k`` is ``(max z over level k-1, min z over level k+1)``; because the
latent vector stays concordant with the levels, these two extrema equal the
max/min over all lower/higher levels.  The compiled sweep keeps the per-level
extrema in ``lvl_max``/``lvl_min`` so each update costs O(1) amortised.

Signed-rank data use levels of ``|d|`` together with the signs: the bound on
``|z_i|`` comes from neighbouring abs-levels (0 from below at the lowest level)
and the sign of ``d_i`` places ``z_i`` on the matching half-line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rngdist
from .errors import InvalidDataError, InvalidParameterError
from .ranks import dense_levels, midranks
from .rngdist import RngStream, TruncationInterval

# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def level_index(level_of, n_levels):
    """CSR layout of the members of each level: ``members[offsets[k]:offsets[k+1]]``."""
    counts = np.zeros(n_levels + 1, dtype=np.int64)
    for i in range(level_of.shape[0]):
        counts[level_of[i] + 1] += 1
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    members = np.empty(level_of.shape[0], dtype=np.int64)
    for i in range(level_of.shape[0]):
        k = level_of[i]
        members[fill[k]] = i
        fill[k] += 1
    return offsets, members


@njit(cache=True)
def refresh_extrema(values, offsets, members, lvl_max, lvl_min):
    for k in range(offsets.shape[0] - 1):
        hi = -np.inf
        lo = np.inf
        for p in range(offsets[k], offsets[k + 1]):
            v = values[members[p]]
            if v > hi:
                hi = v
            if v < lo:
                lo = v
        lvl_max[k] = hi
        lvl_min[k] = lo


@njit(cache=True)
def _update_extrema(values, k, old, new, offsets, members, lvl_max, lvl_min):
    start = offsets[k]
    end = offsets[k + 1]
    if end - start == 1:
        lvl_max[k] = new
        lvl_min[k] = new
        return
    if new >= lvl_max[k]:
        lvl_max[k] = new
    elif old == lvl_max[k]:
        hi = -np.inf
        for p in range(start, end):
            v = values[members[p]]
            if v > hi:
                hi = v
        lvl_max[k] = hi
    if new <= lvl_min[k]:
        lvl_min[k] = new
    elif old == lvl_min[k]:
        lo = np.inf
        for p in range(start, end):
            v = values[members[p]]
            if v < lo:
                lo = v
        lvl_min[k] = lo


@njit(cache=True)
def sweep_ordinal(z, level_of, offsets, members, lvl_max, lvl_min, means, sd, st):
    n_levels = offsets.shape[0] - 1
    for i in range(z.shape[0]):
        k = level_of[i]
        lo = lvl_max[k - 1] if k > 0 else -np.inf
        hi = lvl_min[k + 1] if k < n_levels - 1 else np.inf
        old = z[i]
        new = rngdist.truncated_normal(means[i], sd, lo, hi, st)
        z[i] = new
        _update_extrema(z, k, old, new, offsets, members, lvl_max, lvl_min)


@njit(cache=True)
def sweep_signed(z, absz, level_of, offsets, members, lvl_max, lvl_min, signs, mean, st):
    # lvl_max/lvl_min track |z| per abs-level; absz mirrors |z|.
    n_levels = offsets.shape[0] - 1
    for i in range(z.shape[0]):
        k = level_of[i]
        lo = lvl_max[k - 1] if k > 0 else 0.0
        hi = lvl_min[k + 1] if k < n_levels - 1 else np.inf
        old = absz[i]
        if signs[i] > 0:
            new = rngdist.truncated_normal(mean, 1.0, lo, hi, st)
            absz[i] = new
        else:
            new = rngdist.truncated_normal(mean, 1.0, -hi, -lo, st)
            absz[i] = -new
        z[i] = new
        _update_extrema(absz, k, old, absz[i], offsets, members, lvl_max, lvl_min)


@njit(cache=True)
def shift_move(z, nx, delta, lvl_max, lvl_min, st):
    """Add c ~ Normal(-wbar, 1/N) to every latent value (flat-prior location move)."""
    n = z.shape[0]
    if n == 0:
        return 0.0
    half = 0.5 * delta
    total = 0.0
    for i in range(n):
        total += z[i] + half if i < nx else z[i] - half
    c = -total / n + rngdist.std_normal(st) / math.sqrt(n)
    for i in range(n):
        z[i] += c
    for k in range(lvl_max.shape[0]):
        lvl_max[k] += c
        lvl_min[k] += c
    return c


@njit(cache=True)
def scale_log_ratio(z, location, sd, s):
    n = z.shape[0]
    acc = 0.0
    for i in range(n):
        a = s * z[i] - location[i]
        b = z[i] - location[i]
        acc += b * b - a * a
    return acc / (2.0 * sd * sd) + n * math.log(s)


@njit(cache=True)
def scale_move(z, location, sd, step_sd, st):
    """Multiplicative Metropolis move z -> s z, log s ~ Normal(0, step_sd^2).

    Returns the accepted factor (1.0 on rejection).
    """
    n = z.shape[0]
    if n == 0 or step_sd <= 0.0:
        return 1.0
    s = math.exp(step_sd * rngdist.std_normal(st))
    log_alpha = scale_log_ratio(z, location, sd, s)
    if math.log(rngdist.uniform(st)) < log_alpha:
        for i in range(n):
            z[i] *= s
        return s
    return 1.0


@njit(cache=True)
def joint_scale_move(z, coef, delta, g, st):
    """Exact group move (z, delta) -> (s z, s delta) for latent means ``coef * delta``.

    Under the N(coef_i * delta, 1) latent model and the N(0, g) prior on delta,
    the scale factor has conditional density proportional to
    s**n * exp(-s**2 * A / 2), so s**2 ~ Gamma((n + 1) / 2, rate A / 2).
    Returns s; the caller rescales delta and any cached extrema.
    """
    n = z.shape[0]
    a = delta * delta / g
    for i in range(n):
        r = z[i] - coef[i] * delta
        a += r * r
    s = math.sqrt(2.0 * rngdist.std_gamma(0.5 * (n + 1.0), st) / a)
    for i in range(n):
        z[i] *= s
    return s


@njit(cache=True)
def initial_latent(ranks):
    n = ranks.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = rngdist.ndtri(ranks[i] / (n + 1.0))
    return out


@njit(cache=True)
def initial_signed_latent(abs_ranks, signs):
    n = abs_ranks.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = signs[i] * rngdist.ndtri(0.5 + 0.5 * abs_ranks[i] / (n + 1.0))
    return out


# ---------------------------------------------------------------------------
# Python surface
# ---------------------------------------------------------------------------


class OrdinalLayout:
    """Level bookkeeping for one latent vector (compiled-kernel friendly)."""

    def __init__(self, level_of: np.ndarray):
        self.level_of = np.ascontiguousarray(level_of, dtype=np.int64)
        self.n_levels = int(self.level_of.max()) + 1 if self.level_of.size else 0
        self.offsets, self.members = level_index(self.level_of, self.n_levels)
        self.lvl_max = np.empty(self.n_levels)
        self.lvl_min = np.empty(self.n_levels)

    @classmethod
    def from_values(cls, values) -> "OrdinalLayout":
        return cls(dense_levels(values))

    def refresh(self, values: np.ndarray) -> None:
        refresh_extrema(values, self.offsets, self.members, self.lvl_max, self.lvl_min)


@dataclass
class LatentVector:
    """Latent normal scores and the observed ranks they must stay concordant with."""

    z: np.ndarray
    observed_ranks: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.observed_ranks = np.asarray(self.observed_ranks, dtype=float)
        if self.z.shape != self.observed_ranks.shape:
            raise InvalidDataError("latent values and ranks differ in length")
        if not np.isfinite(self.z).all():
            raise InvalidDataError("latent values must be finite")

    @classmethod
    def initial(cls, values) -> "LatentVector":
        r = midranks(values)
        return cls(initial_latent(r), r)

    def __len__(self):
        return self.z.size

    def is_concordant(self) -> bool:
        return is_concordant(self.z, self.observed_ranks)


def is_concordant(z, ranks) -> bool:
    """True when strictly smaller ranks always carry strictly smaller latents (O(n log n))."""
    z = np.asarray(z, dtype=float)
    ranks = np.asarray(ranks, dtype=float)
    if z.size < 2:
        return True
    order = np.argsort(ranks, kind="stable")
    r = ranks[order]
    zz = z[order]
    levels, start = np.unique(r, return_index=True)
    lvl_max = np.maximum.reduceat(zz, start)
    lvl_min = np.minimum.reduceat(zz, start)
    return bool(np.all(lvl_max[:-1] < lvl_min[1:]))


def thresholds(i: int, latent: LatentVector) -> TruncationInterval:
    """Truncation interval of ``z_i``: (max z over lower ranks, min z over higher ranks)."""
    r = latent.observed_ranks
    below = latent.z[r < r[i]]
    above = latent.z[r > r[i]]
    lower = float(below.max()) if below.size else -math.inf
    upper = float(above.min()) if above.size else math.inf
    return TruncationInterval(lower, upper)


def gibbs_sweep(latent: LatentVector, means, sd: float, stream: RngStream) -> LatentVector:
    """One systematic-scan sweep in ascending index order; returns a new vector."""
    means = np.ascontiguousarray(means, dtype=float)
    if means.shape != latent.z.shape:
        raise InvalidDataError("means must align with the latent vector")
    if not sd > 0:
        raise InvalidParameterError("sd must be positive")
    z = latent.z.copy()
    layout = OrdinalLayout.from_values(latent.observed_ranks)
    layout.refresh(z)
    sweep_ordinal(z, layout.level_of, layout.offsets, layout.members,
                  layout.lvl_max, layout.lvl_min, means, float(sd), stream.state)
    return LatentVector(z, latent.observed_ranks)


def decorrelate_shift(latent_x: LatentVector, latent_y: LatentVector, delta: float,
                      stream: RngStream) -> tuple[LatentVector, LatentVector]:
    nx = latent_x.z.size
    z = np.concatenate([latent_x.z, latent_y.z])
    dummy = np.empty(0)
    shift_move(z, nx, float(delta), dummy, dummy, stream.state)
    return (LatentVector(z[:nx], latent_x.observed_ranks),
            LatentVector(z[nx:], latent_y.observed_ranks))


def decorrelate_scale(latent: LatentVector, location, step_sd: float, stream: RngStream,
                      sd: float = 1.0) -> LatentVector:
    """Metropolis group move ``z -> s z`` against the Normal(location, sd^2) model density."""
    location = np.ascontiguousarray(np.broadcast_to(np.asarray(location, dtype=float),
                                                    latent.z.shape))
    z = latent.z.copy()
    scale_move(z, location, float(sd), float(step_sd), stream.state)
    return LatentVector(z, latent.observed_ranks)


def decorrelate_joint_scale(latent: LatentVector, coef, delta: float, g: float,
                            stream: RngStream) -> tuple[LatentVector, float]:
    """Exact scale group move on (z, delta); returns the new vector and the new delta."""
    coef = np.ascontiguousarray(np.broadcast_to(np.asarray(coef, dtype=float), latent.z.shape))
    if not g > 0:
        raise InvalidParameterError("g must be positive")
    z = latent.z.copy()
    s = joint_scale_move(z, coef, float(delta), float(g), stream.state)
    return LatentVector(z, latent.observed_ranks), s * float(delta)


def scale_acceptance_probability(latent: LatentVector, location, s: float, sd: float = 1.0) -> float:
    location = np.ascontiguousarray(np.broadcast_to(np.asarray(location, dtype=float),
                                                    latent.z.shape))
    return float(min(1.0, math.exp(scale_log_ratio(latent.z, location, float(sd), float(s)))))
