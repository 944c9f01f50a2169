"""
Dynamic program over job profiles and discretised load profiles.

Used when the remaining machine count is too small for any concentration
argument. Each machine receives one configuration of rounded jobs; its load
is replaced by the smallest grid level above it, and among all reachable
complete level profiles the one with the smallest truncated expected maximum
(taken together with the peeled jobs) wins.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from poissonbalance.config.settings import settings
from poissonbalance.exceptions import ConfigExplosionError, GuardError, SolverError
from poissonbalance.models.instance_model import Assignment, JobInstance, merge_peeled, peel_big_jobs
from poissonbalance.solvers.config_ip import IpSolution, enumerate_configs, extract_assignment
from poissonbalance.solvers.rounding import round_instance, unround_assignment
from poissonbalance.utils.poisson_core import (
    DiscreteDist,
    log_b,
    mixed_expected_max_grouped,
    poisson_max_dist,
)

logger = logging.getLogger(__name__)

# 2^(-10^9 / eps^2) underflows for every usable eps; this is the representable floor.
DELTA_FLOOR = 2.0 ** -60

# Level index of a machine that received no job.
EMPTY_LEVEL = 0

# Rows per block in the dominance check.
_DOMINANCE_CHUNK = 256

Profile = Tuple[int, ...]
LevelProfile = Tuple[int, ...]


@dataclass(frozen=True)
class DpParams:
    big_sizes: Tuple[float, ...]
    small_sizes: Tuple[float, ...]
    m: int
    epsilon: float
    m1: int
    mu: float
    delta: float
    u: int

    @classmethod
    def build(cls, big_sizes: Sequence[float], small_sizes: Sequence[float], m: int,
              epsilon: float, delta: Optional[float] = None) -> "DpParams":
        if not 0.0 < epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
        big = tuple(float(x) for x in big_sizes)
        small = tuple(float(x) for x in small_sizes)
        m1 = m - len(big)
        if m1 < 1:
            raise GuardError(f"{len(big)} single-machine jobs leave no machine out of {m}")
        mu = math.fsum(small) / m1
        if delta is None:
            log2_floor = -1e9 / epsilon ** 2
            floor = 2.0 ** log2_floor if log2_floor > -1000 else 0.0
            delta = max(epsilon / (1000.0 * m1), floor, DELTA_FLOOR)
        log_m = log_b(m1) if m1 > 1 else 0.0
        u = max(1, int(math.ceil(1000.0 * epsilon ** -2 * log_m * max(mu, 1.0))))
        return cls(big_sizes=big, small_sizes=small, m=m, epsilon=float(epsilon),
                   m1=m1, mu=mu, delta=float(delta), u=u)

    def check_hypotheses(self):
        """
        Raises:
            GuardError: naming the first violated condition
        """
        tol = 1e-12 * max(self.mu, 1.0)
        for x in self.small_sizes:
            if x > self.mu + tol:
                raise GuardError(f"hypotheses violated: small job {x:.6g} exceeds mu={self.mu:.6g}")
        for x in self.big_sizes:
            if not x > self.mu:
                raise GuardError(f"hypotheses violated: big job {x:.6g} does not exceed mu={self.mu:.6g}")
        if self.m1 > 1:
            limit = 6_000_000.0 * self.epsilon ** -2 * log_b(self.m1)
            if self.mu > limit:
                raise GuardError(f"hypotheses violated: mu={self.mu:.6g} above {limit:.6g}")


@dataclass(frozen=True)
class LoadGrid:
    """Levels l_k = (mu/2)(1+delta)^(k-1) for k = 1..e, with l_(e-1) < 4 mu <= l_e."""

    mu: float
    delta: float
    e: int

    @classmethod
    def build(cls, mu: float, delta: float) -> "LoadGrid":
        if mu <= 0:
            raise ValueError("the load grid needs mu > 0")
        e = int(math.ceil(math.log(8.0) / math.log1p(delta) - 1e-12)) + 1
        while (1.0 + delta) ** (e - 2) * 0.5 >= 4.0 and e > 1:
            e -= 1
        while (1.0 + delta) ** (e - 1) * 0.5 < 4.0:
            e += 1
        return cls(mu=float(mu), delta=float(delta), e=e)

    def level_load(self, k: int) -> float:
        if k == EMPTY_LEVEL:
            return 0.0
        return 0.5 * self.mu * (1.0 + self.delta) ** (k - 1)

    def levels(self) -> np.ndarray:
        return 0.5 * self.mu * (1.0 + self.delta) ** np.arange(self.e)

    def level_of(self, load: float) -> int:
        """Smallest k >= 1 with load <= l_k."""
        half = 0.5 * self.mu
        if load <= half:
            return 1
        k = 1 + int(math.ceil(math.log(load / half) / math.log1p(self.delta) - 1e-12))
        while k > 1 and self.level_load(k - 1) >= load:
            k -= 1
        while self.level_load(k) < load:
            k += 1
        if k > self.e:
            raise GuardError(f"load {load:.6g} is above the top level {self.level_load(self.e):.6g}")
        return k


def level_counts(profile: LevelProfile, grid: LoadGrid) -> Tuple[np.ndarray, np.ndarray]:
    """(level loads, machine counts) for the occupied levels of a sparse profile."""
    levels, counts = np.unique(np.asarray(profile, dtype=np.int64), return_counts=True)
    loads = np.array([grid.level_load(int(k)) for k in levels], dtype=float)
    return loads, counts.astype(float)


def _objective(extra: DiscreteDist, profile: LevelProfile, grid: LoadGrid, u: int) -> float:
    loads, counts = level_counts(profile, grid)
    return mixed_expected_max_grouped(extra, loads, counts, u)


def truncated_objective(load_profile: LevelProfile, grid: LoadGrid, big_sizes: Sequence[float], u: int) -> float:
    """
    sum_{x<u} P[X = x] (x + sum_{y=x+1}^{u} P[max over levels >= y]).

    X is the maximum of Poi(nu) over the big sizes (point mass at 0 when there
    are none); `load_profile` lists one level index per machine.
    """
    extra = poisson_max_dist(big_sizes, u)
    return _objective(extra, tuple(sorted(load_profile)), grid, u)


@dataclass
class ReachabilitySet:
    """
    Reachable (job profile, level profile) pairs, keyed by job profile.

    Level profiles are stored as sorted tuples of level indices (one entry per
    machine used so far), which is the sparse form of the per-level counts.
    With pruning on, a level profile is dropped once another profile of the
    same job profile and length sits at or below it entry by entry.
    """

    states: Dict[Profile, Dict[LevelProfile, Optional[Tuple[Profile, LevelProfile, int]]]] = field(
        default_factory=dict
    )

    def contains(self, p: Profile, levels: LevelProfile) -> bool:
        return levels in self.states.get(p, {})

    def size(self) -> int:
        return sum(len(v) for v in self.states.values())


def dominated(profiles: Sequence[LevelProfile]) -> np.ndarray:
    """
    Flags for the distinct, equal-length sorted profiles bounded from below by another one.

    The objective is non-decreasing in every machine level.
    """
    count = len(profiles)
    flags = np.zeros(count, dtype=bool)
    if count < 2 or not profiles[0]:
        return flags
    arr = np.asarray(profiles, dtype=np.int64)
    for lo in range(0, count, _DOMINANCE_CHUNK):
        block = arr[lo:lo + _DOMINANCE_CHUNK]
        # below[i, j]: profile j <= profile lo+i everywhere
        below = np.all(arr[None, :, :] <= block[:, None, :], axis=2)
        rows = np.arange(block.shape[0])
        below[rows, lo + rows] = False
        flags[lo:lo + block.shape[0]] = below.any(axis=1)
    return flags


def reachable_profiles(pi: np.ndarray, n: np.ndarray, configs: np.ndarray, config_levels: Sequence[int],
                       m1: int, state_budget: Optional[int] = None, cap: Optional[float] = None,
                       prune: bool = True) -> ReachabilitySet:
    """
    Layer by layer over machines used, add one configuration per machine.

    The feasible configurations of a job profile come from one comparison
    against the whole configuration matrix. The last machine only takes the
    configuration that completes the profile, and with `cap` set a profile
    whose leftover mass cannot fit on the machines still free is not kept.

    The first transition to reach a state is kept as its predecessor, with job
    profiles, level profiles and configurations all visited in sorted order.

    Raises:
        ConfigExplosionError: if more than the state budget of states are created
    """
    budget = settings.dp_state_budget if state_budget is None else state_budget
    pi = np.asarray(pi, dtype=float)
    n = np.asarray(n, dtype=np.int64)
    d = pi.size
    configs = np.asarray(configs, dtype=np.int64).reshape(-1, d)
    levels_of = [int(k) for k in config_levels]
    index = {tuple(int(v) for v in c): ci for ci, c in enumerate(configs)}

    start: Profile = tuple([0] * d)
    reach = ReachabilitySet()
    reach.states[start] = {(): None}
    frontier: Dict[Profile, List[LevelProfile]] = {start: [()]}
    total = 1
    pruned = 0
    for layer in range(m1):
        free_after = m1 - layer - 1
        nxt: Dict[Profile, Dict[LevelProfile, Tuple[Profile, LevelProfile, int]]] = {}
        for p in sorted(frontier):
            pv = np.asarray(p, dtype=np.int64)
            rest = n - pv
            if free_after == 0:
                ci = index.get(tuple(int(v) for v in rest))
                choices = np.array([], dtype=np.int64) if ci is None else np.array([ci])
            else:
                choices = np.flatnonzero(np.all(configs <= rest, axis=1))
                if cap is not None and choices.size:
                    left = (rest[None, :] - configs[choices]) @ pi
                    choices = choices[left <= free_after * (cap * (1.0 + 1e-9) + 1e-12)]
            if not choices.size:
                continue
            targets = [tuple(int(v) for v in q) for q in pv + configs[choices]]
            for levels in sorted(frontier[p]):
                for ci, p2 in zip(choices.tolist(), targets):
                    l2 = tuple(sorted(levels + (levels_of[ci],)))
                    bucket = nxt.setdefault(p2, {})
                    if l2 in bucket:
                        continue
                    bucket[l2] = (p, levels, ci)
                    total += 1
                    if total > budget:
                        raise ConfigExplosionError(f"DP reachability exceeds the state budget of {budget}")
        if prune:
            for bucket in nxt.values():
                keys = sorted(bucket)
                for key, flag in zip(keys, dominated(keys)):
                    if flag:
                        del bucket[key]
                        pruned += 1
        for p2, bucket in nxt.items():
            reach.states.setdefault(p2, {}).update(bucket)
        frontier = {p2: list(bucket) for p2, bucket in nxt.items() if bucket}
    logger.debug(f"DP reachability: {total} states over {m1} machines, {pruned} dominated")
    return reach


def _single_machine(params: DpParams) -> List[int]:
    return [0] * len(params.small_sizes)


def run_dp(params: DpParams) -> Assignment:
    """
    Assignment minimising the truncated objective over reachable complete profiles.

    Returns an assignment of small_sizes + big_sizes (in that order) to m
    machines: small jobs on machines 0..m1-1, big job k alone on machine m1+k.

    Raises:
        GuardError: if the hypotheses on sizes and mu fail
    """
    sizes = params.small_sizes + params.big_sizes
    big_machines = [params.m1 + k for k in range(len(params.big_sizes))]

    if not params.small_sizes or params.mu == 0.0:
        return Assignment.from_mapping(sizes, [0] * len(params.small_sizes) + big_machines, params.m)
    if params.m1 == 1:
        return Assignment.from_mapping(sizes, _single_machine(params) + big_machines, params.m)
    params.check_hypotheses()

    rounded = round_instance(params.small_sizes, params.mu, params.delta)
    pi, n = np.unique(np.asarray(rounded.rounded_sizes, dtype=float), return_counts=True)
    n = n.astype(np.int64)
    cap = 4.0 * params.mu
    configs = enumerate_configs(pi, n, cap)
    allow_empty = rounded.n_rounded < params.m1
    if not allow_empty:
        configs = configs[np.any(configs != 0, axis=1)]
    else:
        logger.info(f"Only {rounded.n_rounded} rounded jobs for {params.m1} machines; empty machines allowed")
    grid = LoadGrid.build(params.mu, params.delta)
    config_levels = [
        EMPTY_LEVEL if not np.any(c) else grid.level_of(float(c @ pi)) for c in configs
    ]

    reach = reachable_profiles(pi, n, configs, config_levels, params.m1, cap=cap)
    full: Profile = tuple(int(v) for v in n)
    complete = sorted(lv for lv in reach.states.get(full, {}) if len(lv) == params.m1)
    if not complete:
        raise SolverError("no complete load profile is reachable")

    extra = poisson_max_dist(params.big_sizes, params.u)
    best_value = math.inf
    best_profile: Optional[LevelProfile] = None
    for profile in complete:
        value = _objective(extra, profile, grid, params.u)
        if value < best_value - 1e-12 * max(1.0, abs(best_value)) or best_profile is None:
            best_value, best_profile = value, profile

    machine_configs = _trace(reach, full, best_profile, configs)
    counts: Dict[Tuple[int, ...], int] = {}
    for c in machine_configs:
        counts[c] = counts.get(c, 0) + 1
    solution = IpSolution(objective=best_value, multiplicities=counts, machine_configs=tuple(machine_configs))
    rounded_assignment = extract_assignment(solution, rounded.rounded_sizes, pi)
    sub = unround_assignment(rounded, rounded_assignment)
    logger.info(
        f"DP: m1={params.m1}, delta={params.delta:.3g}, u={params.u}, levels={grid.e}, "
        f"states={reach.size()}, complete profiles={len(complete)}, objective={best_value:.6g}"
    )
    return Assignment.from_mapping(sizes, list(sub.mapping) + big_machines, params.m)


def _trace(reach: ReachabilitySet, full: Profile, profile: LevelProfile, configs: np.ndarray) -> List[Tuple[int, ...]]:
    out: List[Tuple[int, ...]] = []
    p, levels = full, profile
    while True:
        record = reach.states[p][levels]
        if record is None:
            break
        prev_p, prev_levels, ci = record
        out.append(tuple(int(v) for v in configs[ci]))
        p, levels = prev_p, prev_levels
    out.reverse()
    return out


def solve_dp(instance: JobInstance, epsilon: float, delta: Optional[float] = None) -> Assignment:
    """Peel the instance and run the DP on what is left, mapping back to instance job order."""
    peel = peel_big_jobs(instance)
    params = DpParams.build(peel.big_sizes, peel.remaining_sizes, instance.machines, epsilon, delta)
    result = run_dp(params)
    return merge_peeled(instance, peel, result.mapping[: len(peel.remaining_jobs)])
