import logging
import math
from typing import Callable, List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import gammaln, pdtr

from poissonbalance.config.settings import settings
from poissonbalance.models.models import VerifySuite
from poissonbalance.solvers.transition import t3_identity_form, t3_of
from poissonbalance.utils.poisson_core import (
    cdf,
    chernoff_lower,
    chernoff_upper,
    expected_max,
    log_cdf,
    log_pmf,
    mixed_expected_max,
    poisson_max_dist,
    poisson_upper_tail_bound,
    stirling_bounds,
    survival,
)
from poissonbalance.verification.oracle_harness import (
    LemmaRow,
    LoadProfile,
    _row,
    appendix_sweep,
    enumerate_partitions,
    peak_battery,
    mc_agreement_battery,
    proposition_a1_sweep,
    proposition_a1_trend,
    scaling_report,
    stirling_partition_count,
    verify_case_lemma,
)
from poissonbalance.workers.tasks import run_parallel

logger = logging.getLogger(__name__)

APPENDIX_MS = (10 ** 3 + 1, 10 ** 4 + 1, 10 ** 5 + 1, 10 ** 6 + 1)
PROPOSITION_MS = (10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6)

# (case, machines, mu) for the scaling profiles
SCALING_SETUPS = (
    (2, 1000, 50.0),
    (3, 10_000, 0.05),
    (4, 100_000, 100_000 ** -0.3),
    (5, 200_000, 1e-4),
)
SCALING_PROFILES = 20


class SuiteResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    suite: VerifySuite
    rows: List[LemmaRow]

    @property
    def failures(self) -> List[LemmaRow]:
        return [row for row in self.rows if row.failed_assertion]

    @property
    def failed(self) -> bool:
        return bool(self.failures)


def _gather(tasks: Sequence[Callable[[], List[LemmaRow]]]) -> List[LemmaRow]:
    rows: List[LemmaRow] = []
    for block in run_parallel(lambda task: task(), tasks):
        rows.extend(block)
    return rows


# ---- lemmas ----

def lemma_tasks() -> List[Callable[[], List[LemmaRow]]]:
    tasks: List[Callable[[], List[LemmaRow]]] = []
    base = LoadProfile(machines=100, mu=3000.0)
    tasks.append(lambda: verify_case_lemma(1, base, 0.1))
    for seed in range(1, 11):
        profile = LoadProfile(machines=100, mu=3000.0, spread=1.5, seed=seed)
        tasks.append(lambda p=profile: verify_case_lemma(1, p, 0.1))

    for seed in range(3):
        profile = LoadProfile(machines=1000, mu=50.0, spread=1.5, seed=seed)
        tasks.append(lambda p=profile: verify_case_lemma(2, p, 0.1))
    tasks.append(lambda: verify_case_lemma(3, LoadProfile(machines=10_000, mu=0.05), 0.1))
    tasks.append(lambda: verify_case_lemma(4, LoadProfile(machines=10 ** 6, mu=(10 ** 6) ** -0.3), 0.25))
    tasks.append(lambda: verify_case_lemma(5, LoadProfile(machines=200_000, mu=1e-4), 0.1))

    tasks.append(lambda: peak_battery(50, settings.seed))

    for case, machines, mu in SCALING_SETUPS:
        for seed in range(SCALING_PROFILES):
            profile = LoadProfile(machines=machines, mu=mu, spread=1.5, seed=seed)
            tasks.append(lambda c=case, p=profile: [scaling_report(c, p, 0.1)])
    return tasks


# ---- appendix ----

def appendix_rows() -> List[LemmaRow]:
    rows = appendix_sweep(APPENDIX_MS, log_base=settings.log_base_value)
    sweep, _ = proposition_a1_sweep(PROPOSITION_MS, delta=0.5)
    rows.extend(sweep)
    pinned, fractions = proposition_a1_trend(PROPOSITION_MS, delta=0.5)
    rows.extend(pinned)
    ordered = sorted(fractions)
    for small, large in zip(ordered, ordered[1:]):
        rows.append(_row(
            "small_rate.trend", f"m={small}->{large}", fractions[small], fractions[large],
            guard_ok=True, asserted=True,
        ))
    return rows


# ---- identities ----

def _series_oracle(loads: np.ndarray) -> float:
    """sum_k (1 - prod_j P[Poi(mu_j) <= k-1]) with a plain product, far past the bulk."""
    top = float(loads.max())
    if top == 0.0:
        return 0.0
    ks = np.arange(0, int(math.ceil(top + 20.0 * math.sqrt(top) + 60.0)))
    products = np.prod(pdtr(ks[:, None], loads[None, :]), axis=1)
    return math.fsum(1.0 - products)


def pmf_rows() -> List[LemmaRow]:
    rows = []
    for rate in (0.1, 1.0, 10.0, 100.0):
        upper = int(math.ceil(rate + 40.0 * math.sqrt(rate) + 60.0))
        total = math.fsum(math.exp(log_pmf(rate, k)) for k in range(upper + 1))
        rows.append(_row("pmf.normalization", f"rate={rate:g};K={upper}", abs(total - 1.0), 1e-9,
                         guard_ok=True, asserted=True))
    worst = 0.0
    for rate in (0.01, 0.5, 3.0, 25.0, 400.0):
        for k in (0, 1, 2, 5, 20, 100, 500):
            worst = max(worst, abs(cdf(rate, k) + survival(rate, k + 1) - 1.0))
    rows.append(_row("cdf.complement", "grid=5x7", worst, 1e-12, guard_ok=True, asserted=True))
    return rows


def shape_rows() -> List[LemmaRow]:
    rows = []
    rates = np.linspace(0.1, 30.0, 200)
    for k in (0, 1, 5, 20):
        values = np.array([log_cdf(float(r), k) for r in rates])
        rows.append(_row("cdf.monotone", f"k={k}", float(np.diff(values).max()), 0.0,
                         guard_ok=True, asserted=True))
        rows.append(_row("logcdf.concave", f"k={k}", float(np.diff(values, 2).max()), 1e-10,
                         guard_ok=True, asserted=True))

    for total in (2.0, 10.0, 40.0):
        for outer in (0.0, 0.2, 0.4):
            for inner in (0.3, 0.45, 0.5):
                if inner <= outer:
                    continue
                spread_pair = [outer * total, (1.0 - outer) * total]
                tight_pair = [inner * total, (1.0 - inner) * total]
                rows.append(_row(
                    "majorization", f"total={total:g};outer={outer:g};inner={inner:g}",
                    expected_max(tight_pair), expected_max(spread_pair), guard_ok=True, asserted=True,
                ))
    return rows


def mixed_form_rows(count: int = 10, seed: int = 0) -> List[LemmaRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        head = rng.uniform(0.1, 8.0, size=int(rng.integers(1, 4)))
        rest = rng.uniform(0.1, 8.0, size=int(rng.integers(1, 4)))
        top = float(max(head.max(), rest.max()))
        u = int(math.ceil(top + 20.0 * math.sqrt(top) + 60.0))
        extra = poisson_max_dist(head, u)
        tail = extra.pmf(u) * u
        mixed = mixed_expected_max(extra, rest, u) + tail
        direct = expected_max(np.concatenate((head, rest)))
        rows.append(_row("mixed.form", f"profile={i};u={u}", abs(mixed - direct), 1e-6,
                         guard_ok=True, asserted=True))
    return rows


def series_rows(count: int = 50, seed: int = 1) -> List[LemmaRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        loads = rng.uniform(0.0, 50.0, size=int(rng.integers(1, 12)))
        rows.append(_row("series.oracle", f"profile={i};m={loads.size}",
                         abs(expected_max(loads, settings.tail_tol) - _series_oracle(loads)), 1e-6,
                         guard_ok=True, asserted=True))
    return rows


def bound_rows() -> List[LemmaRow]:
    rows = []
    for mu in (10.0, 100.0, 1000.0):
        for d in (0.1, 0.3, 0.5, 0.9):
            params = f"mu={mu:g};d={d:g}"
            rows.append(_row("chernoff.upper", params, survival(mu, int(math.ceil((1.0 + d) * mu))),
                             chernoff_upper(mu, d), guard_ok=True, asserted=True))
            rows.append(_row("chernoff.lower", params, cdf(mu, int(math.floor((1.0 - d) * mu))),
                             chernoff_lower(mu, d), guard_ok=True, asserted=True))
        for x in (1.0, 5.0, mu):
            rows.append(_row("tail.bound", f"mu={mu:g};x={x:g}", survival(mu, int(math.ceil(mu + x))),
                             poisson_upper_tail_bound(mu, x), guard_ok=True, asserted=True))
    for n in (1, 2, 5, 10, 50, 1000):
        lower, upper = stirling_bounds(n)
        exact = float(gammaln(n + 1))
        rows.append(_row("stirling", f"n={n}", lower, exact, guard_ok=True, asserted=True))
        rows.append(_row("stirling", f"n={n}", exact, upper, guard_ok=True, asserted=True))
    return rows


def structure_rows() -> List[LemmaRow]:
    rows = []
    for m in (100, 10 ** 4, 10 ** 6):
        for mu in (0.01, 0.1, 1.0):
            a, b = t3_of(m, mu), t3_identity_form(m, mu)
            rows.append(_row("t3.identity", f"m={m};mu={mu:g}", abs(a - b), 1e-9 * abs(a),
                             guard_ok=True, asserted=True))
    for n in range(0, 9):
        for k in (1, 2, 3):
            counted = sum(1 for _ in enumerate_partitions(n, k))
            expected = sum(stirling_partition_count(n, j) for j in range(0, k + 1))
            rows.append(_row("partitions.count", f"n={n};k={k}", float(counted), float(expected),
                             guard_ok=True, asserted=True, passed=counted == expected))
    return rows


def identity_tasks() -> List[Callable[[], List[LemmaRow]]]:
    return [
        pmf_rows,
        shape_rows,
        mixed_form_rows,
        series_rows,
        bound_rows,
        structure_rows,
        lambda: mc_agreement_battery(20, settings.mc_trials, settings.seed),
    ]


def run_suite(suite: VerifySuite) -> SuiteResult:
    """Run one battery; rows come back in a fixed order whatever the thread scheduling."""
    logger.info(f"Running verify suite '{suite.value}'")
    if suite == VerifySuite.LEMMAS:
        rows = _gather(lemma_tasks())
    elif suite == VerifySuite.APPENDIX:
        rows = appendix_rows()
    elif suite == VerifySuite.IDENTITIES:
        rows = _gather(identity_tasks())
    else:
        raise ValueError(f"unknown suite {suite!r}")
    result = SuiteResult(suite=suite, rows=rows)
    logger.info(
        f"Suite '{suite.value}': {len(rows)} rows, {sum(r.asserted for r in rows)} asserted, "
        f"{len(result.failures)} asserted failures"
    )
    return result
