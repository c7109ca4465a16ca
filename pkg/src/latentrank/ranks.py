"""Midranks and the classical rank statistics (U, W, rank-biserial, Spearman).

Ties always receive midranks.  Conventions:

* ``rank_biserial(x, y)`` is the pairwise sign count
  ``sum_ij Q(x_i - y_j) / (n_x n_y)``; equivalently ``1 - 2 U' / (n_x n_y)``
  where ``U'`` is the Mann-Whitney count built from the y-ranks.
* Paired differences are ``d = y - x``.  Zero differences are dropped before
  ranking and their number is reported.
* ``matched_rank_biserial`` is ``(T+ - T-) / (T+ + T-)`` with ``T+``/``T-``
  the rank sums of the positive/negative differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidDataError, UndefinedStatisticError


def as_sample(values, name: str = "sample", allow_empty: bool = False) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if np.isnan(arr).any():
        raise InvalidDataError(f"{name} contains NaN")
    if not np.isfinite(arr).all():
        raise InvalidDataError(f"{name} contains infinite values")
    if arr.size == 0 and not allow_empty:
        raise InvalidDataError(f"{name} is empty")
    return arr


def midranks(values) -> np.ndarray:
    """Average ranks (1-based), ties sharing the mean of the positions they occupy.

    >>> midranks([4, 3, 1, 2, 3, 5]).tolist()
    [5.0, 3.5, 1.0, 2.0, 3.5, 6.0]
    """
    return rankdata(as_sample(values), method="average")


def dense_levels(values) -> np.ndarray:
    """0-based dense rank: equal values share a level, levels are consecutive."""
    arr = np.asarray(values, dtype=float)
    _, inverse = np.unique(arr, return_inverse=True)
    return inverse.astype(np.int64).ravel()


@dataclass(frozen=True)
class UStatistic:
    u: float
    u_complement: float


def u_statistic(x, y) -> UStatistic:
    """Mann-Whitney U from the x-part of the aggregated midranks."""
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    nx, ny = x.size, y.size
    r = midranks(np.concatenate([x, y]))
    u = float(r[:nx].sum() - nx * (nx + 1) / 2)
    return UStatistic(u=u, u_complement=float(nx * ny - u))


def rank_biserial(x, y) -> float:
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    nx, ny = x.size, y.size
    # Q(x_i - y_j) summed over all pairs == U(x > y) - U(y > x), via ranks
    u = u_statistic(x, y)
    return float((u.u - u.u_complement) / (nx * ny))


def rank_biserial_pairwise(x, y) -> float:
    """Direct O(n_x n_y) evaluation of the pairwise sign count."""
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    return float(np.sign(x[:, None] - y[None, :]).sum() / (x.size * y.size))


@dataclass(frozen=True)
class SignedRankDecomposition:
    differences: np.ndarray
    abs_ranks: np.ndarray
    signs: np.ndarray
    n_zero_dropped: int

    @property
    def w(self) -> float:
        return float(np.sum(self.abs_ranks * self.signs))


def paired_differences(x, y=None, test_value: float | None = None) -> np.ndarray:
    x = as_sample(x, "x")
    if y is not None:
        if test_value is not None:
            raise InvalidDataError("give either a second sample or a test value, not both")
        y = as_sample(y, "y")
        if x.size != y.size:
            raise InvalidDataError(f"paired samples differ in length ({x.size} vs {y.size})")
        return y - x
    if test_value is None:
        return x
    return x - float(test_value)


def signed_rank_decomposition(differences) -> SignedRankDecomposition:
    d = as_sample(differences, "differences", allow_empty=True)
    keep = d != 0
    d = d[keep]
    ranks = rankdata(np.abs(d), method="average") if d.size else np.empty(0)
    return SignedRankDecomposition(
        differences=d,
        abs_ranks=ranks,
        signs=np.sign(d).astype(np.int64),
        n_zero_dropped=int((~keep).sum()),
    )


def signed_rank_w(x, y=None, test_value: float | None = None):
    """Wilcoxon W = sum rank(|d_i|) * sign(d_i) with ``d = y - x``.

    Returns ``(W, decomposition)``.
    """
    dec = signed_rank_decomposition(paired_differences(x, y, test_value))
    return dec.w, dec


def matched_rank_biserial(decomposition: SignedRankDecomposition) -> float:
    if decomposition.abs_ranks.size == 0:
        raise UndefinedStatisticError("all differences are zero")
    t_plus = decomposition.abs_ranks[decomposition.signs > 0].sum()
    t_minus = decomposition.abs_ranks[decomposition.signs < 0].sum()
    return float((t_plus - t_minus) / (t_plus + t_minus))


def spearman_rho(x, y) -> float:
    x = as_sample(x, "x")
    y = as_sample(y, "y")
    if x.size != y.size:
        raise InvalidDataError(f"samples differ in length ({x.size} vs {y.size})")
    if x.size < 2:
        raise UndefinedStatisticError("Spearman's rho needs at least two pairs")
    rx = midranks(x) - (x.size + 1) / 2
    ry = midranks(y) - (y.size + 1) / 2
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise UndefinedStatisticError("Spearman's rho is undefined for a constant margin")
    rho = float(rx @ ry) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, rho)))
