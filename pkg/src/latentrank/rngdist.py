"""Seedable random streams and the distribution primitives used by the samplers.

The generator is PCG32 (XSH-RR output, 64-bit LCG state).  A stream is
identified by ``(seed, stream_id)``: ``stream_id`` selects the LCG increment
``2 * stream_id + 1`` and ``seed`` the starting state, following the reference
``pcg32_srandom_r`` seeding.  Every sampler kernel is compiled with numba and
takes the raw two-word state array, so a Python-level :class:`RngStream` and
the compiled kernels advance exactly the same sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

from .errors import DomainError, InvalidIntervalError, InvalidParameterError

_MULT = np.uint64(6364136223846793005)
_MASK32 = np.uint64(0xFFFFFFFF)
_U18 = np.uint64(18)
_U27 = np.uint64(27)
_U59 = np.uint64(59)
_U31 = np.uint64(31)
_U32 = np.uint64(32)
_TWO_M53 = 1.0 / 9007199254740992.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_MASK64_INT = (1 << 64) - 1


# ---------------------------------------------------------------------------
# Core generator
# ---------------------------------------------------------------------------


@njit(cache=True)
def next_u32(st):
    old = st[0]
    st[0] = old * _MULT + st[1]
    xorshifted = (((old >> _U18) ^ old) >> _U27) & _MASK32
    rot = old >> _U59
    out = (xorshifted >> rot) | (xorshifted << ((_U32 - rot) & _U31))
    return out & _MASK32


@njit(cache=True)
def uniform(st):
    """Uniform draw on the open interval (0, 1) with 53 random bits."""
    a = next_u32(st) >> np.uint64(5)
    b = next_u32(st) >> np.uint64(6)
    return (float(a) * 67108864.0 + float(b) + 0.5) * _TWO_M53


@njit(cache=True)
def std_normal(st):
    # Marsaglia polar method; the second variate is discarded so the stream
    # position depends only on the number of calls.
    while True:
        u = 2.0 * uniform(st) - 1.0
        v = 2.0 * uniform(st) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * math.sqrt(-2.0 * math.log(s) / s)


@njit(cache=True)
def std_exponential(st):
    return -math.log(uniform(st))


@njit(cache=True)
def _tn_right_tail(a, b, st):
    # Standard normal restricted to (a, b) with 0 <= a.
    root = math.sqrt(a * a + 4.0)
    alpha = 0.5 * (a + root)
    uniform_width = 2.0 * math.sqrt(math.e) / (a + root) * math.exp(0.25 * (a * a - a * root))
    if b - a <= uniform_width:
        while True:
            x = a + (b - a) * uniform(st)
            if x <= a or x >= b:
                continue
            if math.log(uniform(st)) <= 0.5 * (a * a - x * x):
                return x
    while True:
        x = a + std_exponential(st) / alpha
        if x <= a or x >= b:
            continue
        d = x - alpha
        if math.log(uniform(st)) <= -0.5 * d * d:
            return x


@njit(cache=True)
def std_truncated_normal(a, b, st):
    """Standard normal restricted to the open interval (a, b)."""
    if a == -np.inf and b == np.inf:
        return std_normal(st)
    if a > 0.0:
        return _tn_right_tail(a, b, st)
    if b < 0.0:
        return -_tn_right_tail(-b, -a, st)
    # interval contains the mode
    if b - a >= _SQRT_2PI:
        while True:
            x = std_normal(st)
            if a < x < b:
                return x
    while True:
        x = a + (b - a) * uniform(st)
        if x <= a or x >= b:
            continue
        if math.log(uniform(st)) <= -0.5 * x * x:
            return x


@njit(cache=True)
def truncated_normal(mean, sd, lower, upper, st):
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    for _ in range(1000):
        x = mean + sd * std_truncated_normal(a, b, st)
        if lower < x < upper:
            return x
    # only reachable when no double lies strictly between the bounds
    return 0.5 * (lower + upper)


@njit(cache=True)
def std_gamma(shape, st):
    """Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 via the power boost."""
    if shape < 1.0:
        return std_gamma(shape + 1.0, st) * math.exp(math.log(uniform(st)) / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = std_normal(st)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        if math.log(uniform(st)) < 0.5 * x * x + d - d * v + d * math.log(v):
            return d * v


@njit(cache=True)
def inverse_gamma(shape, scale, st):
    return scale / std_gamma(shape, st)


@njit(cache=True)
def fill_normals(out, mean, sd, st):
    for i in range(out.shape[0]):
        out[i] = mean + sd * std_normal(st)


@njit(cache=True)
def fill_uniforms(out, st):
    for i in range(out.shape[0]):
        out[i] = uniform(st)


@njit(cache=True)
def seed_state(seed, stream_id):
    st = np.zeros(2, dtype=np.uint64)
    st[1] = (stream_id << np.uint64(1)) | np.uint64(1)
    next_u32(st)
    st[0] = st[0] + seed
    next_u32(st)
    return st


# ---------------------------------------------------------------------------
# Normal quantile (Wichura AS241, PPND16)
# ---------------------------------------------------------------------------


@njit(cache=True)
def ndtri(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2509.0809287301226727 * r + 33430.575583588128105) * r
                    + 67265.770927008700853) * r + 45921.953931549871457) * r
                  + 13731.693765509461125) * r + 1971.5909503065514427) * r
                + 133.14166789178437745) * r + 3.387132872796366608)
        den = (((((((5226.495278852545925 * r + 28729.085735721942674) * r
                    + 39307.89580009271061) * r + 21213.794301586595867) * r
                  + 5394.1960214247511077) * r + 687.1870074920579083) * r
                + 42.313330701600911252) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
                    + 0.24178072517745061177) * r + 1.27045825245236838258) * r
                  + 3.64784832476320460504) * r + 5.7694972214606914055) * r
                + 4.6303378461565452959) * r + 1.42343711074968357734)
        den = (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
                    + 0.0151986665636164571966) * r + 0.14810397642748007459) * r
                  + 0.68976733498510000455) * r + 1.6763848301838038494) * r
                + 2.05319162663775882187) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 0.0012426609473880784386) * r + 0.026532189526576123093) * r
                  + 0.29656057182850489123) * r + 1.7848265399172913358) * r
                + 5.4637849111641143699) * r + 6.6579046435011037772)
        den = (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                    + 1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r
                  + 0.0148753612908506148525) * r + 0.13692988092273580531) * r
                + 0.59983220655588793769) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def _check_sd(mean, sd):
    if not (math.isfinite(mean) and math.isfinite(sd)):
        raise InvalidParameterError(f"mean and sd must be finite, got {mean!r}, {sd!r}")
    if sd <= 0:
        raise InvalidParameterError(f"sd must be positive, got {sd!r}")


@dataclass(frozen=True)
class TruncationInterval:
    """Open interval (lower, upper); either end may be infinite."""

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise InvalidIntervalError("interval bounds must not be NaN")
        if not self.lower < self.upper:
            raise InvalidIntervalError(
                f"lower bound {self.lower!r} must be strictly below upper bound {self.upper!r}"
            )

    def __contains__(self, x) -> bool:
        return self.lower < x < self.upper


class RngStream:
    """Deterministic PCG32 random stream, one per chain.

    Identical ``(seed, stream_id)`` pairs reproduce the same draws bit for bit;
    different ``stream_id`` values select different LCG increments and hence
    independent sequences.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not 0 <= seed <= _MASK64_INT:
            raise InvalidParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not 0 <= stream_id < 2**32:
            raise InvalidParameterError(f"stream_id must be a 32-bit unsigned integer, got {stream_id}")
        self.seed = seed
        self.stream_id = stream_id
        self.state = seed_state(np.uint64(seed), np.uint64(stream_id))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def next_u32(self) -> int:
        return int(next_u32(self.state))

    def uniform(self) -> float:
        return uniform(self.state)

    def normal(self, mean: float = 0.0, sd: float = 1.0) -> float:
        return normal_sample(self, mean, sd)

    def normals(self, size: int, mean: float = 0.0, sd: float = 1.0) -> np.ndarray:
        _check_sd(mean, sd)
        out = np.empty(int(size))
        fill_normals(out, float(mean), float(sd), self.state)
        return out

    def uniforms(self, size: int) -> np.ndarray:
        out = np.empty(int(size))
        fill_uniforms(out, self.state)
        return out

    def exponential(self) -> float:
        return std_exponential(self.state)

    def gamma(self, shape: float) -> float:
        if not (math.isfinite(shape) and shape > 0):
            raise InvalidParameterError(f"gamma shape must be positive, got {shape!r}")
        return std_gamma(float(shape), self.state)


def derive_seed(seed: int, *keys: int) -> int:
    """Mix ``seed`` with integer ``keys`` through SplitMix64 into a new 64-bit seed."""
    z = int(seed) & _MASK64_INT
    for key in (*keys, 0):
        z = (z + 0x9E3779B97F4A7C15 + (int(key) & _MASK64_INT)) & _MASK64_INT
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64_INT
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64_INT
        z ^= z >> 31
    return z


def normal_sample(stream: RngStream, mean: float, sd: float) -> float:
    _check_sd(mean, sd)
    return float(mean) + float(sd) * std_normal(stream.state)


def truncated_normal_sample(stream: RngStream, mean: float, sd: float,
                            interval: TruncationInterval) -> float:
    """Draw from Normal(mean, sd**2) restricted to the open ``interval``."""
    _check_sd(mean, sd)
    lower, upper = float(interval.lower), float(interval.upper)
    if not lower < upper:
        raise InvalidIntervalError(f"empty interval ({lower}, {upper})")
    if math.nextafter(lower, math.inf) >= upper:
        raise InvalidIntervalError(f"no double lies strictly inside ({lower}, {upper})")
    return truncated_normal(float(mean), float(sd), lower, upper, stream.state)


def inverse_gamma_sample(stream: RngStream, shape: float, scale: float) -> float:
    """Draw with density proportional to x**(-shape-1) * exp(-scale/x)."""
    for name, value in (("shape", shape), ("scale", scale)):
        if not (math.isfinite(value) and value > 0):
            raise InvalidParameterError(f"inverse gamma {name} must be positive, got {value!r}")
    return inverse_gamma(float(shape), float(scale), stream.state)


def normal_pdf(x, mean=0.0, sd=1.0):
    z = (np.asarray(x, dtype=float) - mean) / sd
    out = np.exp(-0.5 * z * z - _LOG_SQRT_2PI) / sd
    return out if out.ndim else float(out)


def normal_logpdf(x, mean=0.0, sd=1.0):
    z = (np.asarray(x, dtype=float) - mean) / sd
    out = -0.5 * z * z - _LOG_SQRT_2PI - np.log(sd)
    return out if out.ndim else float(out)


def normal_cdf(x, mean=0.0, sd=1.0):
    if sd <= 0:
        raise InvalidParameterError(f"sd must be positive, got {sd!r}")
    z = (np.asarray(x, dtype=float) - mean) / sd
    out = 0.5 * special.erfc(-z / math.sqrt(2.0))
    return out if out.ndim else float(out)


def normal_quantile(p, mean=0.0, sd=1.0):
    if sd <= 0:
        raise InvalidParameterError(f"sd must be positive, got {sd!r}")
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise DomainError("normal_quantile requires 0 < p < 1")
    flat = np.array([ndtri(v) for v in arr.ravel()]).reshape(arr.shape)
    out = mean + sd * flat
    return out if out.ndim else float(out)


def cauchy_pdf(x, location=0.0, scale=1.0):
    if not scale > 0:
        raise InvalidParameterError(f"Cauchy scale must be positive, got {scale!r}")
    z = (np.asarray(x, dtype=float) - location) / scale
    out = 1.0 / (math.pi * scale * (1.0 + z * z))
    return out if out.ndim else float(out)


def cauchy_cdf(x, location=0.0, scale=1.0):
    z = (np.asarray(x, dtype=float) - location) / scale
    out = 0.5 + np.arctan(z) / math.pi
    return out if out.ndim else float(out)
