"""
Case classification and transition points.

The logarithm written "log" in every threshold is `poisson_core.log_b` in the
base `poisson_core.DEFAULT_LOG_BASE`. Thresholds of the form 2^(2^x) never
leave log space.
"""

import logging
import math
from typing import Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from poissonbalance.exceptions import SolverError
from poissonbalance.models.models import CaseTag, TransitionKind
from poissonbalance.utils.poisson_core import (
    DiscreteDist,
    check_rate,
    group_loads,
    log_b,
    max_cdf,
    survival,
)

logger = logging.getLogger(__name__)

# Target mass for the t2 definition; any constant in (0, 1) would serve.
T2_MASS = 1.0 / 3.0

_LN2 = math.log(2.0)


class CaseLabel(BaseModel):
    model_config = ConfigDict(frozen=True)

    tag: CaseTag
    mu: float
    m1: int
    delta: float


class CaseGuards(BaseModel):
    """Raw truth values of the five branch conditions, before ordering."""

    model_config = ConfigDict(frozen=True)

    case1: bool
    case2: bool
    case3: bool
    case4: bool
    case5: bool


class TransitionPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: TransitionKind
    value: float
    loads: Optional[Tuple[float, ...]] = None
    m: Optional[int] = None
    mu: Optional[float] = None


def check_delta(delta: float) -> float:
    if not 0.0 < delta <= 0.1:
        raise ValueError(f"delta must lie in (0, 1/10], got {delta!r}")
    return float(delta)


def _m_at_least_pow2(m1: int, exponent: float) -> bool:
    """m1 >= 2**exponent."""
    return math.log(m1) >= exponent * _LN2


def _m_at_least_double_pow2(m1: int, inner: float) -> bool:
    """m1 >= 2**(2**inner), compared as ln ln m1 >= inner ln 2 + ln ln 2."""
    if m1 < 2:
        return False
    return math.log(math.log(m1)) >= inner * _LN2 + math.log(_LN2)


def case_guards(mu: float, m1: int, delta: float) -> CaseGuards:
    mu = check_rate(mu)
    if m1 < 1:
        raise ValueError(f"m1 must be at least 1, got {m1!r}")
    delta = check_delta(delta)

    log_m = log_b(m1) if m1 > 1 else 0.0
    case1_bound = (6.0 / delta ** 2) * log_m
    # log of (1 / 2^(1/delta + 1)) * log m1
    if log_m > 0.0:
        ln_mid_bound = math.log(log_m) - (1.0 / delta + 1.0) * _LN2
    else:
        ln_mid_bound = -math.inf
    ln_mu = math.log(mu) if mu > 0 else -math.inf
    power_bound = math.exp(-delta * math.log(m1))  # 1 / m1^delta
    sparse_bound = 4.0 * log_m / m1

    case1 = mu > case1_bound
    case3 = (
        power_bound < mu
        and ln_mu <= ln_mid_bound
        and _m_at_least_pow2(m1, (2.0 / delta) * log_b(2.0 / delta))
    )
    case2 = (
        ln_mu > ln_mid_bound
        and mu <= case1_bound
        and _m_at_least_double_pow2(m1, 2.0 / delta)
    )
    case4 = (
        sparse_bound < mu <= power_bound
        and _m_at_least_pow2(m1, 100.0 / delta ** 2)
    )
    case5 = (
        mu <= sparse_bound
        and m1 >= 1000.0 * (1.0 / delta) * log_b(1.0 / delta) ** 2
    )
    return CaseGuards(case1=case1, case2=case2, case3=case3, case4=case4, case5=case5)


def classify(mu: float, m1: int, delta: float) -> CaseLabel:
    """First branch whose condition holds, in the order Case1/Case3, Case2, Case4, Case5; DP otherwise."""
    guards = case_guards(mu, m1, delta)
    if guards.case1:
        tag = CaseTag.CASE1
    elif guards.case3:
        tag = CaseTag.CASE3
    elif guards.case2:
        tag = CaseTag.CASE2
    elif guards.case4:
        tag = CaseTag.CASE4
    elif guards.case5:
        tag = CaseTag.CASE5
    else:
        tag = CaseTag.DP
    logger.debug(f"classify(mu={mu:.6g}, m1={m1}, delta={delta:.3g}) -> {tag.value}")
    return CaseLabel(tag=tag, mu=float(mu), m1=int(m1), delta=float(delta))


def survival_mass(rates: Sequence[float], counts: Sequence[float], t: int) -> float:
    """sum_j P[Poi(mu_j) >= t] over grouped loads."""
    return math.fsum(float(c) * survival(float(r), t) for r, c in zip(rates, counts))


def t2_of(loads: Sequence[float]) -> int:
    """
    Largest integer t with sum_j P[Poi(mu_j) >= t] >= 1/3.

    Exponential search for a failing t, then binary search; the sum is
    nonincreasing in t. All-zero loads give 0.
    """
    rates, counts = group_loads(loads)
    if rates.size == 0:
        raise ValueError("t2_of needs at least one load")
    if float(rates.max()) == 0.0:
        return 0

    def holds(t: int) -> bool:
        return survival_mass(rates, counts, t) >= T2_MASS

    lo, hi = 0, 1
    while holds(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if holds(mid):
            lo = mid
        else:
            hi = mid
    if not holds(lo) or holds(lo + 1):
        raise SolverError(f"t2 search ended at {lo} without a sign change")
    return lo


def t3_of(m: int, mu: float) -> float:
    """log m / (log(1/mu) + log log m)."""
    if m < 3:
        raise ValueError(f"t3 needs m >= 3, got {m!r}")
    mu = check_rate(mu)
    if mu == 0.0:
        raise ValueError("t3 needs mu > 0")
    denominator = log_b(1.0 / mu) + log_b(log_b(m))
    if denominator <= 0.0:
        raise ValueError(f"t3 undefined: denominator {denominator:.6g} <= 0 at m={m}, mu={mu}")
    return log_b(m) / denominator


def t3_identity_form(m: int, mu: float) -> float:
    """The same point written as mu * log(m^(1/mu)) / log log(m^(1/mu))."""
    mu = check_rate(mu)
    inner = log_b(m) / mu
    if inner <= 0.0 or log_b(inner) <= 0.0:
        raise ValueError(f"t3 identity form undefined at m={m}, mu={mu}")
    return mu * inner / log_b(inner)


def gamma4_of(m: int, mu: float) -> float:
    """log m / (log(4/mu) + log log m)."""
    if m < 3:
        raise ValueError(f"gamma4 needs m >= 3, got {m!r}")
    mu = check_rate(mu)
    if mu == 0.0:
        raise ValueError("gamma4 needs mu > 0")
    denominator = log_b(4.0 / mu) + log_b(log_b(m))
    if denominator <= 0.0:
        raise ValueError(f"gamma4 undefined: denominator {denominator:.6g} <= 0 at m={m}, mu={mu}")
    return log_b(m) / denominator


def t4_of(m: int, mu: float, delta: Optional[float] = None) -> int:
    """
    ceil(gamma4(m, mu)).

    When `delta` is given and the Case 4 guard holds at (mu, m, delta), also
    checks 2 <= t4 <= 1/delta + 1.
    """
    t4 = int(math.ceil(gamma4_of(m, mu) - 1e-12))
    if delta is not None and case_guards(mu, m, delta).case4:
        if not 2 <= t4 <= 1.0 / delta + 1.0:
            raise SolverError(f"t4={t4} outside [2, 1/delta + 1] under the Case 4 guard")
    return t4


def concentration_window(t2: int, delta: float) -> Tuple[int, int]:
    """(floor((1 - 4 delta) t2), ceil((1 + 8 delta) t2))."""
    return int(math.floor((1.0 - 4.0 * delta) * t2)), int(math.ceil((1.0 + 8.0 * delta) * t2))


def bernoulli_w_case4(loads: Sequence[float], t4: int) -> DiscreteDist:
    """W on {t4-1, t4} with P[W = t4-1] = prod_j P[Poi(mu_j) <= t4-1]."""
    if t4 < 1:
        raise ValueError(f"t4 must be at least 1, got {t4!r}")
    return DiscreteDist.two_point(t4 - 1, max_cdf(loads, t4 - 1))


def bernoulli_w_case5(loads: Sequence[float]) -> DiscreteDist:
    """W on {0, 1} with P[W = 1] = 1 - exp(-sum_j mu_j)."""
    total = math.fsum(check_rate(x) for x in loads)
    return DiscreteDist.two_point(0, math.exp(-total))
