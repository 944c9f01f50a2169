import heapq
import logging
from typing import List, Sequence

from poissonbalance.models.instance_model import (
    Assignment,
    JobInstance,
    merge_peeled,
    peel_big_jobs,
)
from poissonbalance.models.models import GreedyOrder
from poissonbalance.solvers.config_ip import build_config_model, extract_assignment, solve_makespan_profile
from poissonbalance.solvers.rounding import round_instance, unround_assignment

logger = logging.getLogger(__name__)


def _check_epsilon(epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    return float(epsilon)


def makespan(sizes: Sequence[float], assignment: Assignment) -> float:
    """Largest machine load of `assignment`, recomputed from the sizes."""
    return max(Assignment.from_mapping(sizes, assignment.mapping, assignment.machines).loads)


def spread_small_instance(count: int, mu: float) -> List[int]:
    """Placement used when there is nothing to balance: one job per machine, or everything on machine 0 when mu = 0."""
    if mu == 0.0:
        return [0] * count
    return list(range(count))


def det_schedule(sizes: Sequence[float], m: int, epsilon: float) -> Assignment:
    """
    (1+epsilon)-approximate makespan minimisation for deterministic sizes

    Peels big jobs, rounds the rest with delta = epsilon/10, minimises the
    makespan of the rounded jobs exactly (configurations capped at 4*mu), then
    maps the result back to the original jobs.

    Args:
        sizes: Deterministic job sizes
        m: Number of machines
        epsilon: Accuracy in (0, 1)

    Returns:
        Assignment of the given jobs to the m machines
    """
    epsilon = _check_epsilon(epsilon)
    instance = JobInstance(machines=m, sizes=tuple(sizes))
    peel = peel_big_jobs(instance)
    remaining = peel.remaining_sizes

    if len(remaining) <= peel.m1 or peel.mu == 0.0:
        sub_mapping = spread_small_instance(len(remaining), peel.mu)
        return merge_peeled(instance, peel, sub_mapping)

    delta = epsilon / 10.0
    rounded = round_instance(remaining, peel.mu, delta)
    model = build_config_model(rounded.rounded_sizes, peel.m1, 4.0 * peel.mu)
    solution = solve_makespan_profile(model)
    rounded_assignment = extract_assignment(solution, rounded.rounded_sizes, model.distinct_sizes)
    sub = unround_assignment(rounded, rounded_assignment)
    logger.debug(
        f"det_schedule: n={instance.n}, m={m}, peeled={len(peel.big_jobs)}, "
        f"rounded makespan={solution.objective:.6g}, makespan={max(sub.loads):.6g}"
    )
    return merge_peeled(instance, peel, sub.mapping)


def graham_greedy(sizes: Sequence[float], m: int, order: GreedyOrder = GreedyOrder.LPT) -> Assignment:
    """Each job in turn goes to the least-loaded machine, lowest index on ties."""
    if m < 1:
        raise ValueError("m must be at least 1")
    sizes = [float(s) for s in sizes]
    if order == GreedyOrder.LPT:
        sequence = sorted(range(len(sizes)), key=lambda i: (-sizes[i], i))
    else:
        sequence = list(range(len(sizes)))

    heap = [(0.0, j) for j in range(m)]
    mapping = [0] * len(sizes)
    for i in sequence:
        load, j = heapq.heappop(heap)
        mapping[i] = j
        heapq.heappush(heap, (load + sizes[i], j))
    return Assignment.from_mapping(sizes, mapping, m)


def mean_substitution_solve(instance: JobInstance, epsilon: float) -> Assignment:
    """Treat every rate as a deterministic size and schedule for makespan."""
    return det_schedule(instance.sizes, instance.machines, epsilon)
