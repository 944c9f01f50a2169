"""
Rounding of small-job instances onto a geometric-then-arithmetic grid, and the
conversions between assignments of original and rounded jobs.
"""

import logging
import math
from typing import List, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from poissonbalance.exceptions import RoundingError
from poissonbalance.models.instance_model import Assignment

logger = logging.getLogger(__name__)

BUNDLE = -1

# Grid ceilings absorb float noise of this size (e.g. 1.1 / 0.1 = 11.000000000000002).
_GRID_EPS = 1e-9


def _grid_ceil(x: float) -> int:
    return int(math.ceil(x - _GRID_EPS))


class RoundedInstance(BaseModel):
    """
    Rounded jobs plus the correspondence back to the original ones.

    `provenance[i]` is the position in `original_sizes` of the job rounded job i
    came from, or BUNDLE for the jobs of size delta*mu that stand in for the
    summed sub-threshold jobs.
    """

    model_config = ConfigDict(frozen=True)

    rounded_sizes: Tuple[float, ...]
    provenance: Tuple[int, ...]
    original_sizes: Tuple[float, ...]
    small_jobs: Tuple[int, ...]
    delta: float
    mu: float
    bundle_count: int

    @property
    def bundle_size(self) -> float:
        return self.delta * self.mu

    @property
    def grid_step(self) -> float:
        return self.delta * self.delta * self.mu

    @property
    def n_rounded(self) -> int:
        return len(self.rounded_sizes)


def _check_delta(delta: float):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")


def round_size(size: float, mu: float, delta: float) -> float:
    """Round one size >= delta*mu up the (1+delta)-geometric grid, then up the delta^2*mu grid."""
    base = delta * mu
    k = max(0, _grid_ceil(math.log(size / base) / math.log1p(delta)))
    nu = base * (1.0 + delta) ** k
    step = delta * delta * mu
    l = _grid_ceil(nu / step)
    return l * step


def round_instance(sizes: Sequence[float], mu: float, delta: float) -> RoundedInstance:
    """
    Round every job of size at least delta*mu, and replace the rest by bundles.

    Jobs below delta*mu are summed into S, which is then covered by
    ceil(S / (delta*mu)) jobs of size exactly delta*mu (none when S = 0).

    Raises:
        ValueError: if delta is outside (0, 1) or a size exceeds mu
    """
    _check_delta(delta)
    sizes = tuple(float(s) for s in sizes)
    if mu < 0 or not math.isfinite(mu):
        raise ValueError(f"mu must be finite and non-negative, got {mu!r}")
    limit = mu * (1.0 + 1e-12)
    for i, s in enumerate(sizes):
        if s > limit:
            raise ValueError(f"job {i} has size {s} above mu={mu}")

    if mu == 0.0:
        return RoundedInstance(
            rounded_sizes=(), provenance=(), original_sizes=sizes,
            small_jobs=tuple(range(len(sizes))), delta=delta, mu=mu, bundle_count=0,
        )

    base = delta * mu
    order = sorted(range(len(sizes)), key=lambda i: (sizes[i], i))
    rounded: List[float] = []
    provenance: List[int] = []
    small: List[int] = []
    for i in order:
        if sizes[i] >= base:
            rounded.append(round_size(sizes[i], mu, delta))
            provenance.append(i)
        else:
            small.append(i)

    s_total = math.fsum(sizes[i] for i in small)
    bundles = max(1, _grid_ceil(s_total / base)) if s_total > 0 else 0
    rounded.extend([base] * bundles)
    provenance.extend([BUNDLE] * bundles)

    logger.debug(
        f"Rounded {len(sizes)} jobs to {len(rounded)} (bundles={bundles}, "
        f"distinct={len(set(rounded))}, delta={delta}, mu={mu:.6g})"
    )
    return RoundedInstance(
        rounded_sizes=tuple(rounded),
        provenance=tuple(provenance),
        original_sizes=sizes,
        small_jobs=tuple(small),
        delta=delta,
        mu=mu,
        bundle_count=bundles,
    )


def distinct_size_bound(delta: float) -> int:
    """Upper bound on the number of distinct rounded sizes for this delta."""
    return int(math.ceil(math.log(1.0 / delta) / math.log1p(delta))) + 2


def unround_assignment(rounded: RoundedInstance, rounded_assignment: Assignment) -> Assignment:
    """
    Turn an assignment of rounded jobs into one of the original jobs.

    Each rounded job that came from an original hands its machine to that
    original. Sub-threshold originals are then packed first-fit decreasing into
    the slack each machine has left (its rounded load minus the originals it
    already holds). Anything that does not fit goes to the machine where it
    raises the load-to-rounded-load ratio least.

    Raises:
        RoundingError: if jobs are unaccounted for or a machine ends above
            (1 + 5*delta) times its rounded load
    """
    m = rounded_assignment.machines
    n = len(rounded.original_sizes)
    if len(rounded_assignment.mapping) != rounded.n_rounded:
        raise RoundingError(
            f"assignment covers {len(rounded_assignment.mapping)} jobs, "
            f"rounding produced {rounded.n_rounded}"
        )
    covered = sorted([p for p in rounded.provenance if p != BUNDLE] + list(rounded.small_jobs))
    if covered != list(range(n)):
        raise RoundingError("provenance does not cover every original job exactly once")

    sizes = rounded.original_sizes
    rounded_loads = rounded_assignment.loads
    mapping = [-1] * n
    placed: List[List[float]] = [[] for _ in range(m)]
    for i, origin in enumerate(rounded.provenance):
        if origin == BUNDLE:
            continue
        machine = rounded_assignment.mapping[i]
        mapping[origin] = machine
        placed[machine].append(sizes[origin])

    tol = 1e-12 * max(rounded.mu, 1.0)
    used = [math.fsum(block) for block in placed]
    slack = [rounded_loads[j] - used[j] for j in range(m)]
    fill = [0.0] * m
    leftovers: List[int] = []
    for job in sorted(rounded.small_jobs, key=lambda i: (-sizes[i], i)):
        size = sizes[job]
        for j in range(m):
            if fill[j] + size <= slack[j] + tol:
                mapping[job] = j
                fill[j] += size
                break
        else:
            leftovers.append(job)

    loads = [used[j] + fill[j] for j in range(m)]
    for job in leftovers:
        size = sizes[job]
        best = min(
            range(m),
            key=lambda j: ((loads[j] + size) / rounded_loads[j] if rounded_loads[j] > 0 else math.inf, j),
        )
        mapping[job] = best
        loads[best] += size
    if leftovers:
        logger.debug(f"Un-rounding placed {len(leftovers)} small jobs outside the machine slack")

    result = Assignment.from_mapping(sizes, mapping, m)
    bound = 1.0 + 5.0 * rounded.delta
    for j in range(m):
        if result.loads[j] > bound * rounded_loads[j] + tol:
            raise RoundingError(
                f"machine {j} load {result.loads[j]:.9g} exceeds (1+5*delta) x rounded load "
                f"{rounded_loads[j]:.9g}"
            )
    return result


def round_assignment(rounded: RoundedInstance, assignment: Assignment) -> Assignment:
    """
    Carry an assignment of original jobs over to the rounded jobs.

    Every rounded job follows its original; machine j receives
    ceil(s_j / (delta*mu)) bundles, s_j being its sub-threshold load, until the
    bundles run out.
    """
    m = assignment.machines
    sizes = rounded.original_sizes
    base = rounded.bundle_size
    small_load = [0.0] * m
    for job in rounded.small_jobs:
        small_load[assignment.mapping[job]] += sizes[job]

    wanted = [_grid_ceil(s / base) if s > 0 else 0 for s in small_load] if base > 0 else [0] * m
    mapping: List[int] = []
    bundle_machines: List[int] = []
    for j in range(m):
        bundle_machines.extend([j] * wanted[j])

    given = 0
    for i, origin in enumerate(rounded.provenance):
        if origin != BUNDLE:
            mapping.append(assignment.mapping[origin])
        elif given < len(bundle_machines):
            mapping.append(bundle_machines[given])
            given += 1
        else:
            # float noise can leave one bundle over
            target = min(range(m), key=lambda j: (small_load[j] - wanted[j] * base, j))
            mapping.append(target)
    return Assignment.from_mapping(rounded.rounded_sizes, mapping, m)
