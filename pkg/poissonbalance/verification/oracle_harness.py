"""
Ground truth for the solvers and numeric checks of the concentration results.

Every row the checks produce is a `LemmaRow`. By convention a row passes when
lhs <= rhs (a few rows carry their own sandwich test; see `params`). A row
is `asserted` only when the hypotheses behind it are actually met at the
size being evaluated; everything else is reported and never fails a run.
"""

import logging
import math
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from poissonbalance.config.settings import settings
from poissonbalance.exceptions import GuardError
from poissonbalance.models.instance_model import Assignment, JobInstance
from poissonbalance.solvers.transition import (
    bernoulli_w_case4,
    bernoulli_w_case5,
    case_guards,
    concentration_window,
    t2_of,
    t3_of,
    t4_of,
)
from poissonbalance.utils.poisson_core import (
    DEFAULT_LOG_BASE,
    expected_max,
    iid_expected_max,
    log_b,
    max_cdf,
    max_survival,
)
from poissonbalance.workers.tasks import parallel_sample_max

logger = logging.getLogger(__name__)

# Bound constants of the scaling claims, per case.
SCALING_CONSTANTS = {2: 16.0, 3: 20.0, 4: 16.0, 5: 10.0}

APPENDIX_BETA = 1.0 / 1024.0

BATTERY_PEAKS = (400.0, 1000.0, 5000.0)

REPORT_COLUMNS = ("lemma", "params", "lhs", "rhs", "ratio", "guard_ok", "pass")

# lam = m**(-a) for the asserted small-rate trend
TREND_EXPONENTS = (1.0, 0.75, 0.5, 0.35, 0.25)


class LemmaRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    lemma: str
    params: str
    lhs: float
    rhs: float
    ratio: float
    guard_ok: bool
    passed: bool
    asserted: bool = False

    @property
    def failed_assertion(self) -> bool:
        return self.asserted and not self.passed

    def as_csv_row(self) -> Dict[str, object]:
        return {
            "lemma": self.lemma,
            "params": self.params,
            "lhs": f"{self.lhs:.12g}",
            "rhs": f"{self.rhs:.12g}",
            "ratio": f"{self.ratio:.12g}",
            "guard_ok": str(self.guard_ok).lower(),
            "pass": str(self.passed).lower(),
        }


class LoadProfile(BaseModel):
    """
    A synthetic load vector: `machines` loads averaging about `mu`.

    With spread s each load is mu times a factor drawn from [1/s, s], the
    factors are normalised to mean 1 and snapped to a 1/20 grid. For s <= 2
    every load stays inside [mu/4, 4 mu], and the grid keeps the number of
    distinct loads small enough for the grouped max engine.
    """

    model_config = ConfigDict(frozen=True)

    machines: int
    mu: float
    spread: float = 1.0
    seed: int = 0

    @field_validator("machines")
    @classmethod
    def _check_machines(cls, value: int) -> int:
        if value < 1:
            raise ValueError("machines must be at least 1")
        return value

    @field_validator("mu")
    @classmethod
    def _check_mu(cls, value: float) -> float:
        if not math.isfinite(value) or value <= 0.0:
            raise ValueError("mu must be positive")
        return value

    @field_validator("spread")
    @classmethod
    def _check_spread(cls, value: float) -> float:
        if not 1.0 <= value <= 2.0:
            raise ValueError("spread must lie in [1, 2]")
        return value

    def loads(self) -> np.ndarray:
        if self.spread == 1.0:
            return np.full(self.machines, self.mu)
        rng = np.random.default_rng(self.seed)
        factors = rng.uniform(1.0 / self.spread, self.spread, size=self.machines)
        factors = np.clip(np.round(factors / factors.mean() * 20.0) / 20.0, 0.25, 4.0)
        return self.mu * factors

    def describe(self) -> str:
        return f"m={self.machines};mu={self.mu:.6g};spread={self.spread:g};seed={self.seed}"


def _row(lemma: str, params: str, lhs: float, rhs: float, guard_ok: bool,
         asserted: bool = False, passed: Optional[bool] = None, ratio: Optional[float] = None) -> LemmaRow:
    if passed is None:
        passed = lhs <= rhs * (1.0 + 1e-12) + 1e-15
    if ratio is None:
        ratio = lhs / rhs if rhs != 0.0 else (1.0 if lhs == 0.0 else math.inf)
    row = LemmaRow(
        lemma=lemma, params=params, lhs=float(lhs), rhs=float(rhs), ratio=float(ratio),
        guard_ok=bool(guard_ok), passed=bool(passed), asserted=bool(asserted),
    )
    if not row.passed:
        level = logging.ERROR if row.asserted else logging.WARNING
        logger.log(level, f"{lemma} [{params}] does not hold: lhs={lhs:.6g}, rhs={rhs:.6g}")
    return row


# ---- Brute force ----

def stirling_partition_count(n: int, k: int) -> int:
    """Stirling number of the second kind, by S(n,k) = k S(n-1,k) + S(n-1,k-1)."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be non-negative")
    table = [[0] * (k + 1) for _ in range(n + 1)]
    table[0][0] = 1
    for i in range(1, n + 1):
        for j in range(1, min(i, k) + 1):
            table[i][j] = j * table[i - 1][j] + table[i - 1][j - 1]
    return table[n][k]


def enumerate_partitions(n: int, max_blocks: int) -> Iterator[Tuple[int, ...]]:
    """
    Restricted growth strings of length n using at most `max_blocks` blocks.

    Block labels appear in order of their smallest job, so each set partition
    of the jobs, i.e. each assignment up to machine relabeling, appears once.
    """
    if n == 0:
        yield ()
        return
    labels = [0] * n

    def extend(i: int, used: int) -> Iterator[Tuple[int, ...]]:
        if i == n:
            yield tuple(labels)
            return
        for label in range(min(used + 1, max_blocks)):
            labels[i] = label
            yield from extend(i + 1, max(used, label + 1))

    yield from extend(1, 1)


def brute_force_opt(instance: JobInstance, tail_tol: Optional[float] = None) -> Tuple[Assignment, float]:
    """
    Exact optimum by enumerating every assignment up to machine relabeling

    Args:
        instance: At most `brute_force_max_jobs` jobs on at most `brute_force_max_machines` machines
        tail_tol: Truncation tolerance of the expected-max engine

    Returns:
        (optimal assignment in canonical labeling, its expected maximum load)

    Raises:
        GuardError: If the instance exceeds the size guard
    """
    tail_tol = settings.tail_tol if tail_tol is None else tail_tol
    if instance.n > settings.brute_force_max_jobs or instance.machines > settings.brute_force_max_machines:
        raise GuardError(
            f"brute force is limited to n <= {settings.brute_force_max_jobs} and "
            f"m <= {settings.brute_force_max_machines}, got n={instance.n}, m={instance.machines}"
        )

    @lru_cache(maxsize=None)
    def value_of(sorted_loads: Tuple[float, ...]) -> float:
        return expected_max(sorted_loads, tail_tol)

    best_mapping: Tuple[int, ...] = ()
    best_value = math.inf
    visited = 0
    for mapping in enumerate_partitions(instance.n, instance.machines):
        visited += 1
        loads = [0.0] * instance.machines
        for job, machine in enumerate(mapping):
            loads[machine] += instance.sizes[job]
        value = value_of(tuple(sorted(loads)))
        if value < best_value - 1e-15:
            best_value, best_mapping = value, mapping
    logger.debug(f"brute force visited {visited} partitions, {value_of.cache_info().currsize} distinct load vectors")
    return Assignment.from_mapping(instance.sizes, best_mapping, instance.machines), best_value


# ---- Monte Carlo ----

def monte_carlo_emax(loads: Sequence[float], trials: Optional[int] = None, seed: Optional[int] = None,
                     streams: Optional[int] = None, workers: Optional[int] = None) -> Tuple[float, float]:
    """Sample mean of max_j Poi(loads[j]) and its standard error; fixed by (seed, streams, trials)."""
    trials = settings.mc_trials if trials is None else trials
    seed = settings.seed if seed is None else seed
    samples = parallel_sample_max(loads, trials, seed, streams, workers).astype(float)
    estimate = float(samples.mean())
    if samples.size < 2:
        return estimate, 0.0
    return estimate, float(samples.std(ddof=1) / math.sqrt(samples.size))


def mc_agreement_battery(count: int = 20, trials: Optional[int] = None, seed: int = 0) -> List[LemmaRow]:
    """Exact expected max against Monte Carlo on random small profiles; asserted within 4 standard errors."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        machines = int(rng.integers(1, 9))
        loads = rng.uniform(0.1, 20.0, size=machines)
        exact = expected_max(loads, settings.tail_tol)
        estimate, se = monte_carlo_emax(loads, trials, seed + i)
        rows.append(_row(
            "mc.agreement", f"profile={i};m={machines};exact={exact:.9g};estimate={estimate:.9g}",
            abs(estimate - exact), 4.0 * se, guard_ok=True, asserted=True,
        ))
    return rows


# ---- Concentration checks ----

def _guards(mu: float, m: int, delta: float):
    try:
        return case_guards(mu, m, delta)
    except ValueError:
        return None


def _tail_sum(loads: np.ndarray, start: int) -> float:
    """sum_{k >= start} P[max >= k]."""
    head = math.fsum(max_survival(loads, k) for k in range(1, start))
    return max(0.0, expected_max(loads, settings.tail_tol) - head)


def _check_case1(loads: np.ndarray, delta: float, params: str) -> List[LemmaRow]:
    peak = float(loads.max())
    m = loads.size
    guard = m > 1 and peak > (6.0 / delta ** 2) * log_b(m)
    e = expected_max(loads, settings.tail_tol)
    return [
        _row("case1.lower", params, peak, e, guard, asserted=guard),
        _row("case1.upper", params, e, (1.0 + 5.0 * delta) * peak, guard, asserted=guard),
    ]


def _check_case2(loads: np.ndarray, delta: float, params: str, guard: bool) -> List[LemmaRow]:
    e = expected_max(loads, settings.tail_tol)
    t2 = t2_of(loads)
    low, high = concentration_window(t2, delta)
    inflated = (1.0 + delta) * loads
    params = f"{params};t2={t2};l={low};r={high}"
    return [
        _row("case2.window_upper", params, max_survival(inflated, high), delta ** 2, guard),
        _row("case2.tail_sum", params, _tail_sum(inflated, high), delta, guard),
        _row("case2.window_lower", params, 1.0 - delta, max_survival(loads, low), guard),
        _row("case2.lower", params, (1.0 - 6.0 * delta) * t2, e, guard),
        _row("case2.upper", params, e, (1.0 + 10.0 * delta) * t2, guard),
    ]


def _check_case3(loads: np.ndarray, delta: float, params: str, guard: bool) -> List[LemmaRow]:
    m = loads.size
    t3 = t3_of(m, float(loads.mean()))
    e = expected_max(loads, settings.tail_tol)
    params = f"{params};t3={t3:.6g}"
    return [
        _row("case3.lower", params, (1.0 - 4.0 * delta) * t3, e, guard),
        _row("case3.upper", params, e, (1.0 + 14.0 * delta) * t3, guard),
    ]


def _check_case4(loads: np.ndarray, delta: float, params: str, guard: bool) -> List[LemmaRow]:
    m = loads.size
    t4 = t4_of(m, float(loads.mean()))
    w = bernoulli_w_case4(loads, t4).mean()
    e = expected_max(loads, settings.tail_tol)
    focus = max_cdf(loads, t4) - max_cdf(loads, t4 - 2)
    params = f"{params};t4={t4}"
    return [
        _row("case4.lower", params, (1.0 - 5.0 * delta) * w, e, guard),
        _row("case4.upper", params, e, (1.0 + 16.0 * delta) * w, guard),
        _row("case4.focus", params, 1.0 - delta, focus, guard),
    ]


def _check_case5(loads: np.ndarray, delta: float, params: str, guard: bool) -> List[LemmaRow]:
    w = bernoulli_w_case5(loads).mean()
    e = expected_max(loads, settings.tail_tol)
    beyond_one = max(0.0, e - max_survival(loads, 1))
    return [
        _row("case5.lower", params, w, e, guard, asserted=guard),
        _row("case5.upper", params, e, (1.0 + 10.0 * delta) * w, guard, asserted=guard),
        _row("case5.tail", params, beyond_one, delta, guard, asserted=guard),
    ]


def verify_case_lemma(case: int, profile: LoadProfile, delta: float) -> List[LemmaRow]:
    """
    Evaluate the conclusions for one case on one profile, exactly

    Case 1 and Case 5 rows are asserted when their hypotheses hold; Cases 2-4
    need astronomically many machines, so their rows are reported only.

    Args:
        case: 1..5
        profile: The loads to evaluate
        delta: Accuracy parameter in (0, 1)

    Returns:
        One row per inequality checked
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    loads = profile.loads()
    mu = float(loads.mean())
    params = f"{profile.describe()};delta={delta:g}"
    if case == 1:
        return _check_case1(loads, delta, params)
    guards = _guards(mu, profile.machines, delta)
    if case == 2:
        return _check_case2(loads, delta, params, bool(guards and guards.case2))
    if case == 3:
        return _check_case3(loads, delta, params, bool(guards and guards.case3))
    if case == 4:
        return _check_case4(loads, delta, params, bool(guards and guards.case4))
    if case == 5:
        return _check_case5(loads, delta, params, bool(guards and guards.case5))
    raise ValueError(f"case must be 1..5, got {case!r}")


def scaling_report(case: int, profile: LoadProfile, delta: float) -> LemmaRow:
    """
    Realized ratio E[max at inflated loads] / E[max] against 1 + C delta.

    Cases 2, 4 and 5 inflate every load by 1 + delta; Case 3 compares
    m i.i.d. Poi(4 mu) with m i.i.d. Poi(mu). Asserted for Case 5 under its guard.
    """
    if case not in SCALING_CONSTANTS:
        raise ValueError(f"scaling is defined for cases 2..5, got {case!r}")
    loads = profile.loads()
    mu = float(loads.mean())
    guards = _guards(mu, profile.machines, delta)
    guard = bool(guards and getattr(guards, f"case{case}"))
    if case == 3:
        base = iid_expected_max(mu, profile.machines, settings.tail_tol)
        scaled = iid_expected_max(4.0 * mu, profile.machines, settings.tail_tol)
    else:
        base = expected_max(loads, settings.tail_tol)
        scaled = expected_max((1.0 + delta) * loads, settings.tail_tol)
    ratio = scaled / base if base > 0.0 else 1.0
    bound = 1.0 + SCALING_CONSTANTS[case] * delta
    return _row(
        f"case{case}.scaling", f"{profile.describe()};delta={delta:g}", ratio, bound,
        guard, asserted=(case == 5 and guard),
    )


def peak_battery(count: int = 50, seed: int = 0) -> List[LemmaRow]:
    """t2 >= mu_1 on random profiles whose largest load mu_1 is 400, 1000 or 5000."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        peak = BATTERY_PEAKS[i % len(BATTERY_PEAKS)]
        others = rng.uniform(0.0, peak, size=int(rng.integers(0, 20)))
        loads = np.concatenate(([peak], others))
        t2 = t2_of(loads)
        rows.append(_row(
            "t2.peak", f"profile={i};mu1={peak:g};m={loads.size}", peak, float(t2),
            guard_ok=True, asserted=True,
        ))
    return rows


# ---- Balanced versus lopsided split ----

def appendix_counterexample(m: int, beta: float = APPENDIX_BETA,
                            log_base: float = DEFAULT_LOG_BASE) -> Tuple[float, float, float]:
    """
    Expected max of the balanced split against the lopsided one, with lambda = beta log(m-1).

    Balanced: (m+1)/2 machines at 2 lambda and the rest empty. Lopsided: one
    machine at 2 lambda and m-1 machines at lambda.

    Returns:
        (E_balanced, E_lopsided, E_balanced - E_lopsided)
    """
    if m < 3 or m % 2 == 0:
        raise ValueError(f"m must be an odd integer >= 3, got {m!r}")
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    lam = beta * log_b(m - 1, log_base)
    balanced = iid_expected_max(2.0 * lam, (m + 1) // 2, settings.tail_tol)
    lopsided = expected_max(np.concatenate(([2.0 * lam], np.full(m - 1, lam))), settings.tail_tol)
    logger.debug(f"m={m}: lambda={lam:.6g}, balanced={balanced:.9g}, lopsided={lopsided:.9g}")
    return balanced, lopsided, balanced - lopsided


def appendix_sweep(ms: Sequence[int], beta: float = APPENDIX_BETA,
                   log_base: float = DEFAULT_LOG_BASE) -> List[LemmaRow]:
    """The gap at each m; only the largest m is asserted strictly positive."""
    rows = []
    largest = max(ms)
    for m in sorted(ms):
        balanced, lopsided, gap = appendix_counterexample(m, beta, log_base)
        rows.append(_row(
            "appendix.gap", f"m={m};beta={beta:.6g};log_base={log_base:.6g};gap={gap:.6g}",
            lopsided, balanced, guard_ok=True, asserted=(m == largest), passed=gap > 0.0,
        ))
    return rows


def proposition_a1_check(m: int, lam: float, delta: float, strict: bool = False) -> LemmaRow:
    """
    Floor/ceil sandwich on E[max of m i.i.d. Poi(lam)] around L = log m / (log(1/lam) + log log m)

    Passes when (1 - delta) floor(L) <= E <= ceil((1 + delta) L). Reported only:
    the statement holds beyond an unspecified m.

    A rate outside [1/m, (ln m)/16] is still evaluated and comes back with
    guard_ok=False; at m = 10**6 that excludes lam = 1, since ln(10**6)/16 is about 0.86.

    Raises:
        GuardError: If strict and lam is outside [1/m, (ln m)/16]
        ValueError: If m < 3, delta is outside (0, 1), or L is undefined at this rate
    """
    if m < 3:
        raise ValueError(f"m must be at least 3, got {m!r}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    in_range = 1.0 / m <= lam <= math.log(m) / 16.0
    if not in_range:
        if strict:
            raise GuardError(f"lambda={lam!r} outside [1/m, ln(m)/16] for m={m}")
        logger.info(f"small_rate: lambda={lam:.6g} outside [1/m, ln(m)/16] for m={m}, reporting anyway")
    point = t3_of(m, lam)
    lower = (1.0 - delta) * math.floor(point)
    upper = float(math.ceil((1.0 + delta) * point))
    e = iid_expected_max(lam, m, settings.tail_tol)
    return _row(
        "small_rate", f"m={m};lambda={lam:.6g};delta={delta:g};lower={lower:.6g};L={point:.6g}",
        e, upper, guard_ok=in_range, passed=lower <= e <= upper, ratio=e / point,
    )


def proposition_a1_sweep(ms: Sequence[int], delta: float = 0.5,
                         lambdas_per_m: int = 12) -> Tuple[List[LemmaRow], Dict[int, float]]:
    """Sandwich rows over a geometric lambda grid on [1/m, ln(m)/16] per m, plus the pass fraction per m."""
    if lambdas_per_m < 1:
        raise ValueError("lambdas_per_m must be at least 1")
    rows = []
    fractions = {}
    for m in sorted(ms):
        grid = np.geomspace(1.0 / m, math.log(m) / 16.0, lambdas_per_m)
        # geomspace may overshoot its end points by an ulp
        grid = np.clip(grid, 1.0 / m, math.log(m) / 16.0)
        block = [proposition_a1_check(m, float(lam), delta, strict=True) for lam in grid]
        fractions[m] = sum(r.passed for r in block) / len(block)
        rows.extend(block)
    return rows, fractions


def proposition_a1_trend(ms: Sequence[int], delta: float = 0.5,
                         exponents: Sequence[float] = TREND_EXPONENTS) -> Tuple[List[LemmaRow], Dict[int, float]]:
    """
    Sandwich rows at lam = m**(-a) for each exponent a, plus the pass fraction per m

    Rates pinned to a power of m keep the same relative place in [1/m, (ln m)/16]
    as m grows, so the pass fractions are comparable across m. Rates that fall
    outside the range for some m are skipped.
    """
    if not exponents or any(not 0.0 < a <= 1.0 for a in exponents):
        raise ValueError(f"exponents must lie in (0, 1], got {exponents!r}")
    rows = []
    fractions = {}
    for m in sorted(ms):
        top = math.log(m) / 16.0
        rates = [max(float(m) ** -a, 1.0 / m) for a in exponents]
        block = [proposition_a1_check(m, lam, delta, strict=True) for lam in rates if lam <= top]
        if not block:
            raise ValueError(f"no trend rate fits [1/m, ln(m)/16] for m={m}")
        fractions[m] = sum(r.passed for r in block) / len(block)
        rows.extend(block)
    return rows, fractions
