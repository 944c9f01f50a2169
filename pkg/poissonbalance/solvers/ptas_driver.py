"""
End-to-end approximation scheme: peel, round, classify, dispatch, un-round, merge.
"""

import logging
import math
import time
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict

from poissonbalance.exceptions import SolverError
from poissonbalance.models.instance_model import Assignment, JobInstance, merge_peeled, peel_big_jobs
from poissonbalance.models.models import CaseTag, TransitionKind
from poissonbalance.solvers.config_ip import (
    ConfigModel,
    CostFunction,
    build_config_model,
    extract_assignment,
    solve_config_ip,
)
from poissonbalance.solvers.det_sched import det_schedule, spread_small_instance
from poissonbalance.solvers.dp_solver import DpParams, run_dp
from poissonbalance.solvers.rounding import RoundedInstance, round_instance, unround_assignment
from poissonbalance.solvers.transition import CaseGuards, TransitionPoint, case_guards, classify, t3_of, t4_of
from poissonbalance.utils.poisson_core import log_b, log_cdf, survival

logger = logging.getLogger(__name__)

CASE2_TARGET = 1.0 / 3.0


class SolveHooks(BaseModel):
    """Test-only overrides: a different delta, or a branch forced past its guard."""

    model_config = ConfigDict(frozen=True)

    delta: Optional[float] = None
    force_case: Optional[CaseTag] = None


class RunReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    branch: CaseTag
    epsilon: float
    delta: float
    mu: float
    m1: int
    big_jobs: int
    rounded_jobs: int = 0
    transition: Optional[TransitionPoint] = None
    guards: Optional[CaseGuards] = None
    solver: str
    ip_probes: int = 0
    configs: int = 0
    wall_time: float = 0.0
    assignment: Optional[Assignment] = None


def _check_epsilon(epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    return float(epsilon)


def _solve_rounded(rounded: RoundedInstance, model: ConfigModel, f: CostFunction,
                   linear: bool = False) -> Tuple[List[int], float]:
    solution = solve_config_ip(model, f, linear=linear)
    rounded_assignment = extract_assignment(solution, rounded.rounded_sizes, model.distinct_sizes)
    return list(unround_assignment(rounded, rounded_assignment).mapping), solution.objective


def case2_search(model: ConfigModel, mu: float, m1: int) -> Tuple[int, int, Dict[int, float]]:
    """
    Smallest integer t in [floor(mu), ceil(100 mu log m1)] whose probe optimum is below 1/3.

    A probe at t solves the program with cost x -> P[Poi(x) > t]. Falls back to
    the upper end when no probe qualifies.

    Returns:
        (t2, number of probes, probe optimum per t)
    """
    lo = int(math.floor(mu))
    hi = max(lo, int(math.ceil(100.0 * mu * log_b(m1)))) if m1 > 1 else lo
    probes: Dict[int, float] = {}

    def probe(t: int) -> float:
        if t not in probes:
            probes[t] = solve_config_ip(model, lambda x, t=t: survival(x, t + 1)).objective
            seen = sorted(probes.items())
            for (_, a), (_, b) in zip(seen, seen[1:]):
                if b > a + 1e-12:
                    raise SolverError(f"probe optima increase with t: {seen}")
        return probes[t]

    if probe(hi) >= CASE2_TARGET:
        logger.warning(f"No probe in [{lo}, {hi}] reaches 1/3; using t2={hi}")
        return hi, len(probes), probes
    left, right = lo, hi
    while left < right:
        mid = (left + right) // 2
        if probe(mid) < CASE2_TARGET:
            right = mid
        else:
            left = mid + 1
    return left, len(probes), probes


def _run(instance: JobInstance, epsilon: float, hooks: Optional[SolveHooks]) -> RunReport:
    started = time.perf_counter()
    epsilon = _check_epsilon(epsilon)
    hooks = hooks or SolveHooks()
    peel = peel_big_jobs(instance)
    remaining = peel.remaining_sizes
    delta = hooks.delta if hooks.delta is not None else epsilon / 1000.0

    def report(branch: CaseTag, sub_mapping, solver: str, **extra) -> RunReport:
        assignment = merge_peeled(instance, peel, sub_mapping)
        return RunReport(
            branch=branch, epsilon=epsilon, delta=delta, mu=peel.mu, m1=peel.m1,
            big_jobs=len(peel.big_jobs), solver=solver, assignment=assignment,
            wall_time=time.perf_counter() - started, **extra,
        )

    if len(remaining) <= peel.m1 or peel.mu == 0.0:
        logger.info(f"All jobs fit one per machine after peeling {len(peel.big_jobs)}; nothing to balance")
        return report(CaseTag.ALL_PEELED, spread_small_instance(len(remaining), peel.mu), "direct")

    rounded = round_instance(remaining, peel.mu, delta)
    label = classify(peel.mu, peel.m1, delta)
    guards = case_guards(peel.mu, peel.m1, delta)
    branch = hooks.force_case or label.tag
    if hooks.force_case is not None:
        logger.warning(f"Branch forced to {branch.value} (classified as {label.tag.value})")
    logger.info(
        f"Branch {branch.value}: mu={peel.mu:.6g}, m1={peel.m1}, delta={delta:.3g}, "
        f"peeled={len(peel.big_jobs)}, rounded jobs={rounded.n_rounded}"
    )
    common = dict(rounded_jobs=rounded.n_rounded, guards=guards)

    if branch in (CaseTag.CASE1, CaseTag.CASE3):
        sub = det_schedule(remaining, peel.m1, epsilon / 5.0)
        if branch == CaseTag.CASE3:
            try:
                common["transition"] = TransitionPoint(
                    kind=TransitionKind.T3, value=t3_of(peel.m1, peel.mu), m=peel.m1, mu=peel.mu)
            except ValueError as e:
                logger.warning(f"Case 3: no t3 at m1={peel.m1}, mu={peel.mu:.6g}: {e}")
        return report(branch, sub.mapping, "det_schedule", **common)

    if branch == CaseTag.DP:
        params = DpParams.build(peel.big_sizes, remaining, instance.machines, epsilon)
        result = run_dp(params)
        return report(branch, result.mapping[: len(remaining)], "dp", **common)

    model = build_config_model(rounded.rounded_sizes, peel.m1, 4.0 * peel.mu)
    common["configs"] = len(model.configs)

    if branch == CaseTag.CASE2:
        t2, probes, _ = case2_search(model, peel.mu, peel.m1)
        sub, objective = _solve_rounded(rounded, model, lambda x: survival(x, t2 + 1))
        logger.info(f"Case 2: t2={t2} after {probes} probes, objective={objective:.6g}")
        point = TransitionPoint(kind=TransitionKind.T2, value=t2, loads=tuple(Assignment.from_mapping(
            remaining, sub, peel.m1).loads))
        return report(branch, sub, "config_ip", transition=point, ip_probes=probes + 1, **common)

    if branch == CaseTag.CASE4:
        t4 = t4_of(peel.m1, peel.mu, delta if hooks.force_case is None else None)
        sub, objective = _solve_rounded(rounded, model, lambda x: -log_cdf(x, t4 - 1))
        logger.info(f"Case 4: t4={t4}, objective={objective:.6g}")
        point = TransitionPoint(kind=TransitionKind.T4, value=t4, m=peel.m1, mu=peel.mu)
        return report(branch, sub, "config_ip", transition=point, ip_probes=1, **common)

    if branch == CaseTag.CASE5:
        sub, objective = _solve_rounded(rounded, model, lambda x: x, linear=True)
        logger.info(f"Case 5: objective={objective:.6g}")
        return report(branch, sub, "config_ip", ip_probes=1, **common)

    raise SolverError(f"no solver for branch {branch.value}")


def ptas_solve(instance: JobInstance, epsilon: float, _hooks: Optional[SolveHooks] = None) -> Assignment:
    """
    (1+epsilon)-approximate assignment for the expected maximum load

    Args:
        instance: Jobs and machine count
        epsilon: Accuracy in (0, 1)

    Returns:
        Assignment of every job; peeled jobs sit alone on their machines
    """
    return _run(instance, epsilon, _hooks).assignment


def describe_run(instance: JobInstance, epsilon: float, _hooks: Optional[SolveHooks] = None) -> RunReport:
    """Same control flow as ptas_solve, returning the branch taken and the solver statistics."""
    return _run(instance, epsilon, _hooks)
