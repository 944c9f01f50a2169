"""Poisson numerics and exact expected maxima of independent Poisson collections.

All products over machines are carried as sums of log-CDFs. Identical rates are
grouped first, so a collection of a million identical machines costs one CDF
evaluation per threshold.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp, pdtr, pdtrc, xlogy

logger = logging.getLogger(__name__)

# Base of every "log" appearing in case thresholds and transition points.
DEFAULT_LOG_BASE = math.e

_TAIL_TERMS_FLOOR = 50


def log_b(x: float, base: float = DEFAULT_LOG_BASE) -> float:
    """Logarithm in the configured base."""
    if base == math.e:
        return math.log(x)
    return math.log(x) / math.log(base)


def check_rate(rate: float) -> float:
    value = float(rate)
    if not math.isfinite(value) or value < 0.0:
        raise ValueError(f"Poisson rate must be finite and non-negative, got {rate!r}")
    return value


def _check_tail_tol(tail_tol: float) -> float:
    if not 0.0 < tail_tol < 1.0:
        raise ValueError(f"tail_tol must lie in (0, 1), got {tail_tol!r}")
    return float(tail_tol)


class NeumaierAccumulator:
    """Element-wise compensated running sum over numpy arrays.

    Keeps a carry per element so that summing many log-CDF rows does not
    lose the small terms next to large ones.
    """

    def __init__(self, shape):
        self.total = np.zeros(shape, dtype=float)
        self.carry = np.zeros(shape, dtype=float)

    def add(self, values: np.ndarray) -> None:
        t = self.total + values
        big = np.abs(self.total) >= np.abs(values)
        self.carry += np.where(big, (self.total - t) + values, (values - t) + self.total)
        self.total = t

    def result(self) -> np.ndarray:
        return self.total + self.carry


@dataclass(frozen=True)
class DiscreteDist:
    """Distribution on the integers {offset, offset+1, ...} given by its PMF."""

    support_offset: int
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("DiscreteDist needs a non-empty 1D probability vector")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("DiscreteDist probabilities must be finite and non-negative")
        if abs(math.fsum(p) - 1.0) > 1e-9:
            raise ValueError(f"DiscreteDist probabilities sum to {math.fsum(p)!r}, not 1")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "support_offset", int(self.support_offset))

    @classmethod
    def point_mass(cls, value: int) -> "DiscreteDist":
        return cls(support_offset=int(value), probabilities=np.array([1.0]))

    @classmethod
    def two_point(cls, low: int, p_low: float) -> "DiscreteDist":
        """Bernoulli-type variable on {low, low+1} with P[low] = p_low."""
        p_low = min(max(float(p_low), 0.0), 1.0)
        return cls(support_offset=int(low), probabilities=np.array([p_low, 1.0 - p_low]))

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_offset, self.support_offset + self.probabilities.size)

    def pmf(self, x: int) -> float:
        i = int(x) - self.support_offset
        if 0 <= i < self.probabilities.size:
            return float(self.probabilities[i])
        return 0.0

    def mean(self) -> float:
        return math.fsum(self.support * self.probabilities)


# ---- Single-variable functions ----

def log_pmf(rate: float, k: int) -> float:
    """ln P[Poi(rate) = k], via log-gamma."""
    rate = check_rate(rate)
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k!r}")
    return float(xlogy(k, rate) - rate - gammaln(k + 1))


def _lower_tail_by_terms(rate: float, k: int) -> float:
    terms = xlogy(np.arange(k + 1), rate) - rate - gammaln(np.arange(k + 1) + 1)
    return float(logsumexp(terms))


def _upper_tail_by_terms(rate: float, k: int) -> float:
    # Terms past k shrink at least by rate/(k+1) each step.
    ratio = rate / (k + 1)
    length = _TAIL_TERMS_FLOOR
    if 0.0 < ratio < 1.0:
        length = max(length, int(math.ceil(-46.0 / math.log(ratio))))
    length = min(length, 1_000_000)
    js = np.arange(k, k + length)
    terms = xlogy(js, rate) - rate - gammaln(js + 1)
    return float(logsumexp(terms))


def _log_cdf_array(rate: float, ks: np.ndarray) -> np.ndarray:
    """ln P[Poi(rate) <= k] for an integer array ks (negative k gives -inf)."""
    ks = np.asarray(ks, dtype=float)
    out = np.full(ks.shape, -np.inf)
    valid = ks >= 0
    if rate == 0.0:
        out[valid] = 0.0
        return out
    kv = ks[valid]
    upper = pdtrc(kv, rate)
    lower = pdtr(kv, rate)
    with np.errstate(divide="ignore"):
        res = np.where(upper < 0.5, np.log1p(-upper), np.log(lower))
    for i in np.flatnonzero(np.isneginf(res)):
        res[i] = _lower_tail_by_terms(rate, int(kv[i]))
    out[valid] = res
    return out


def _log_survival_array(rate: float, ks: np.ndarray) -> np.ndarray:
    """ln P[Poi(rate) >= k] for an integer array ks."""
    ks = np.asarray(ks, dtype=float)
    out = np.zeros(ks.shape)
    positive = ks > 0
    if rate == 0.0:
        out[positive] = -np.inf
        return out
    kv = ks[positive] - 1
    upper = pdtrc(kv, rate)
    lower = pdtr(kv, rate)
    with np.errstate(divide="ignore"):
        res = np.where(lower < 0.5, np.log1p(-lower), np.log(upper))
    for i in np.flatnonzero(np.isneginf(res)):
        res[i] = _upper_tail_by_terms(rate, int(kv[i]) + 1)
    out[positive] = res
    return out


def cdf(rate: float, k: int) -> float:
    """P[Poi(rate) <= k]; zero for k < 0."""
    rate = check_rate(rate)
    if k < 0:
        return 0.0
    if rate == 0.0:
        return 1.0
    return float(pdtr(k, rate))


def survival(rate: float, k: int) -> float:
    """P[Poi(rate) >= k]; one for k <= 0."""
    rate = check_rate(rate)
    if k <= 0:
        return 1.0
    if rate == 0.0:
        return 0.0
    return float(pdtrc(k - 1, rate))


def log_cdf(rate: float, k: int) -> float:
    rate = check_rate(rate)
    return float(_log_cdf_array(rate, np.array([k]))[0])


def log_survival(rate: float, k: int) -> float:
    rate = check_rate(rate)
    return float(_log_survival_array(rate, np.array([k]))[0])


def poisson_upper_tail_bound(rate: float, x: float) -> float:
    """Bound on P[Poi(rate) >= rate + x]: exp(-x^2 / (2 (rate + x)))."""
    rate = check_rate(rate)
    if not x > 0:
        raise ValueError(f"x must be positive, got {x!r}")
    return math.exp(-x * x / (2.0 * (rate + x)))


def chernoff_upper(mu: float, d: float) -> float:
    """Bound on P[Poi(mu) >= (1+d) mu] for 0 < d < 1."""
    mu = check_rate(mu)
    if not 0.0 < d < 1.0:
        raise ValueError(f"d must lie in (0, 1), got {d!r}")
    return math.exp(-mu * d * d / 3.0)


def chernoff_lower(mu: float, d: float) -> float:
    """Bound on P[Poi(mu) <= (1-d) mu] for 0 < d < 1."""
    mu = check_rate(mu)
    if not 0.0 < d < 1.0:
        raise ValueError(f"d must lie in (0, 1), got {d!r}")
    return math.exp(-mu * d * d / 2.0)


def stirling_bounds(n: int) -> Tuple[float, float]:
    """(lower, upper) bounds on ln n! from the Robbins form of Stirling."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    base = 0.5 * math.log(2.0 * math.pi * n) + n * math.log(n) - n
    return base + 1.0 / (12.0 * n + 1.0), base + 1.0 / (12.0 * n)


# ---- Maxima of independent Poissons ----

def group_loads(loads: Iterable[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct rates and their multiplicities."""
    arr = np.asarray(list(loads) if not isinstance(loads, np.ndarray) else loads, dtype=float).ravel()
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("loads must be finite and non-negative")
    rates, counts = np.unique(arr, return_counts=True)
    return rates, counts.astype(float)


def log_max_cdf_grouped(rates: np.ndarray, counts: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """ln P[max <= k] for each k, over the grouped collection."""
    ks = np.asarray(ks)
    acc = NeumaierAccumulator(ks.shape)
    dead = np.zeros(ks.shape, dtype=bool)
    for rate, count in zip(rates, counts):
        row = _log_cdf_array(float(rate), ks)
        hit = np.isneginf(row)
        dead |= hit
        acc.add(np.where(hit, 0.0, count * row))
    out = acc.result()
    out[dead] = -np.inf
    return np.minimum(out, 0.0)


def max_survival_grouped(rates: np.ndarray, counts: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """P[max >= k] for each k."""
    ks = np.asarray(ks)
    return -np.expm1(log_max_cdf_grouped(rates, counts, ks - 1))


def max_cdf(loads: Sequence[float], k: int) -> float:
    """P[max_j Poi(loads[j]) <= k] as a product of CDFs taken in log space."""
    rates, counts = group_loads(loads)
    if rates.size == 0:
        return 1.0 if k >= 0 else 0.0
    return float(np.exp(log_max_cdf_grouped(rates, counts, np.array([k]))[0]))


def max_survival(loads: Sequence[float], k: int) -> float:
    """P[max_j Poi(loads[j]) >= k]."""
    rates, counts = group_loads(loads)
    if rates.size == 0:
        return 1.0 if k <= 0 else 0.0
    return float(max_survival_grouped(rates, counts, np.array([k]))[0])


def _tail_certificate(rates: np.ndarray, counts: np.ndarray, K: int) -> float:
    """Upper bound on sum_{k > K} P[max >= k].

    Union bound over machines, the exponential tail bound at K+1, and the
    geometric domination P[X >= k+1] <= rate/(k+1) * P[X >= k].
    """
    logs = []
    for rate, count in zip(rates, counts):
        if rate == 0.0:
            continue
        x = K + 1 - rate
        if x <= 0 or rate >= K + 2:
            return math.inf
        logs.append(math.log(count) - x * x / (2.0 * (rate + x)) - math.log1p(-rate / (K + 2)))
    if not logs:
        return 0.0
    return float(np.exp(logsumexp(logs)))


def expected_max_grouped(rates: np.ndarray, counts: np.ndarray, tail_tol: float = 1e-9) -> float:
    """E[max] over grouped rates, truncated once the tail is certified below tail_tol."""
    tail_tol = _check_tail_tol(tail_tol)
    if rates.size == 0:
        raise ValueError("expected_max needs at least one load")
    top = float(rates.max())
    if top == 0.0:
        return 0.0
    K = int(math.ceil(top + 10.0 * math.sqrt(top) + 50.0))
    pieces = []
    done = 0
    while True:
        ks = np.arange(done + 1, K + 1)
        pieces.append(math.fsum(max_survival_grouped(rates, counts, ks)))
        done = K
        result = math.fsum(pieces)
        tail = _tail_certificate(rates, counts, K)
        if tail < tail_tol * (1.0 + result):
            logger.debug(f"expected_max truncated at K={K}, tail bound {tail:.3e}")
            return result
        K *= 2


def expected_max(loads: Sequence[float], tail_tol: float = 1e-9) -> float:
    """E[max_j Poi(loads[j])] = sum_{k>=1} P[max >= k], truncated with a certified tail."""
    rates, counts = group_loads(loads)
    return expected_max_grouped(rates, counts, tail_tol)


def iid_expected_max(rate: float, count: int, tail_tol: float = 1e-9) -> float:
    """E[max of `count` i.i.d. Poi(rate)]."""
    rate = check_rate(rate)
    if count < 1:
        raise ValueError("count must be at least 1")
    return expected_max_grouped(np.array([rate]), np.array([float(count)]), tail_tol)


def poisson_max_dist(rates: Sequence[float], upper: int) -> DiscreteDist:
    """Law of max_i Poi(rates[i]) on {0..upper}, the mass at or above `upper` folded into `upper`.

    An empty collection is the point mass at 0.
    """
    if upper < 0:
        raise ValueError("upper must be non-negative")
    grouped, counts = group_loads(rates)
    if grouped.size == 0 or float(grouped.max()) == 0.0 or upper == 0:
        return DiscreteDist.point_mass(0)
    ks = np.arange(0, upper)
    cum = np.exp(log_max_cdf_grouped(grouped, counts, ks))
    probs = np.diff(np.concatenate(([0.0], cum)))
    probs = np.clip(probs, 0.0, None)
    probs = np.append(probs, max(0.0, 1.0 - math.fsum(probs)))
    probs = probs / math.fsum(probs)
    return DiscreteDist(support_offset=0, probabilities=probs)


def mixed_expected_max_grouped(extra: DiscreteDist, rates: np.ndarray, counts: np.ndarray, u: int) -> float:
    if u < 1:
        raise ValueError(f"u must be at least 1, got {u!r}")
    survival_y = np.zeros(u)
    if rates.size and float(rates.max()) > 0.0:
        # P[max >= y] is nonincreasing, so once it is exactly 0.0 the rest is too
        top = float(rates.max())
        stop = min(u, int(math.ceil(top + 10.0 * math.sqrt(top) + 50.0)))
        while True:
            survival_y[:stop] = max_survival_grouped(rates, counts, np.arange(1, stop + 1))
            if stop == u or survival_y[stop - 1] == 0.0:
                break
            stop = min(u, 2 * stop)
    # cum[x] = sum_{y=1}^{x} P[max >= y]
    cum = np.concatenate(([0.0], np.cumsum(survival_y)))
    xs = extra.support
    inside = (xs >= 0) & (xs <= u - 1)
    xs_in = xs[inside]
    p_in = extra.probabilities[inside]
    terms = p_in * (xs_in + (cum[u] - cum[xs_in]))
    return math.fsum(terms)


def mixed_expected_max(extra: DiscreteDist, loads: Sequence[float], u: int) -> float:
    """Truncated E[max{extra, max_j Poi(loads[j])}].

    Returns sum_{x=0}^{u-1} P[extra=x] (x + sum_{y=x+1}^{u} P[max >= y]).
    The profile-independent part sum_{x>=u} P[extra=x] x is left to the caller.
    """
    if extra.support_offset < 0:
        raise ValueError("extra must be supported on non-negative integers")
    rates, counts = group_loads(loads)
    return mixed_expected_max_grouped(extra, rates, counts, u)


# ---- Sampling ----

def sample_poisson(rate: float, rng: np.random.Generator) -> int:
    """Exact Poisson draw from a seeded numpy Generator."""
    rate = check_rate(rate)
    return int(rng.poisson(rate))


def sample_max(loads: Sequence[float], rng: np.random.Generator) -> int:
    arr = np.asarray(loads, dtype=float)
    if arr.size == 0:
        return 0
    return int(rng.poisson(arr).max())


def sample_max_batch(loads: Sequence[float], rng: np.random.Generator, size: int) -> np.ndarray:
    """`size` independent draws of max_j Poi(loads[j])."""
    arr = np.asarray(loads, dtype=float)
    if arr.size == 0:
        return np.zeros(size, dtype=np.int64)
    return rng.poisson(arr, size=(size, arr.size)).max(axis=1)
