"""
Configuration integer program over rounded job sizes.

    minimise   sum_c x_c f(c . pi)
    subject to sum_c x_c = m,  sum_c x_c c = n,  x_c >= 0 integer

solved exactly by dynamic programming over job profiles: V_j[p] is the cheapest
way to place the jobs still missing from profile p on exactly j machines.
"""

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from poissonbalance.config.settings import settings
from poissonbalance.exceptions import ConfigExplosionError, InfeasibleError, SolverError
from poissonbalance.models.instance_model import Assignment

logger = logging.getLogger(__name__)

CostFunction = Callable[[float], float]

_CAP_RTOL = 1e-12
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ConfigModel:
    distinct_sizes: np.ndarray
    counts: np.ndarray
    machines: int
    cap: float
    configs: np.ndarray

    @property
    def d(self) -> int:
        return int(self.distinct_sizes.size)

    @property
    def job_count(self) -> int:
        return int(self.counts.sum())

    @property
    def config_loads(self) -> np.ndarray:
        return self.configs @ self.distinct_sizes


@dataclass(frozen=True)
class IpSolution:
    objective: float
    multiplicities: Dict[Tuple[int, ...], int]
    machine_configs: Tuple[Tuple[int, ...], ...] = field(default=())

    def total_machines(self) -> int:
        return sum(self.multiplicities.values())


def _fits(load: float, cap: float) -> bool:
    return load <= cap * (1.0 + _CAP_RTOL) + _CAP_RTOL


def enumerate_configs(pi: Sequence[float], n: Sequence[int], cap: float,
                      limit: Optional[int] = None) -> np.ndarray:
    """
    All integer vectors 0 <= c <= n with c . pi <= cap, in lexicographic order.

    Raises:
        ConfigExplosionError: if more than `limit` configurations exist
    """
    pi = np.asarray(pi, dtype=float)
    n = np.asarray(n, dtype=np.int64)
    if pi.size != n.size:
        raise ValueError("pi and n must have the same length")
    if pi.size and (np.any(pi <= 0) or np.any(np.diff(pi) <= 0)):
        raise ValueError("pi must be strictly increasing and positive")
    limit = settings.config_limit if limit is None else limit
    d = pi.size
    bounds = [int(min(n[k], math.floor(cap / pi[k] * (1.0 + _CAP_RTOL) + _CAP_RTOL))) if cap >= 0 else 0
              for k in range(d)]

    out: List[Tuple[int, ...]] = []
    current = [0] * d

    def walk(k: int, load: float):
        if k == d:
            out.append(tuple(current))
            if len(out) > limit:
                raise ConfigExplosionError(f"more than {limit} configurations (d={d}, cap={cap:.6g})")
            return
        for v in range(bounds[k] + 1):
            extra = load + v * pi[k]
            if v > 0 and not _fits(extra, cap):
                break
            current[k] = v
            walk(k + 1, extra)
        current[k] = 0

    walk(0, 0.0)
    return np.array(out, dtype=np.int64).reshape(len(out), d)


def build_config_model(sizes: Sequence[float], machines: int, cap: float,
                       limit: Optional[int] = None) -> ConfigModel:
    """Group rounded sizes into (pi, n) and enumerate Q for the given per-machine cap."""
    if machines < 1:
        raise ValueError("machines must be at least 1")
    arr = np.asarray(sizes, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("configuration sizes must be positive")
    pi, counts = np.unique(arr, return_counts=True)
    if pi.size and pi[-1] > cap * (1.0 + _CAP_RTOL) + _CAP_RTOL:
        raise InfeasibleError(f"job of size {pi[-1]:.6g} exceeds the machine cap {cap:.6g}")
    configs = enumerate_configs(pi, counts, cap, limit)
    logger.debug(f"Config model: d={pi.size}, jobs={arr.size}, |Q|={len(configs)}, cap={cap:.6g}")
    return ConfigModel(distinct_sizes=pi, counts=counts.astype(np.int64), machines=machines,
                       cap=float(cap), configs=configs)


def _config_costs(model: ConfigModel, f: CostFunction) -> np.ndarray:
    loads = model.config_loads
    memo: Dict[float, float] = {}
    costs = np.empty(loads.size)
    for i, load in enumerate(loads):
        key = float(load)
        if key not in memo:
            memo[key] = float(f(key))
        costs[i] = memo[key]
    return costs


def _profile_dp(model: ConfigModel, costs: np.ndarray, combine: Callable,
                state_budget: Optional[int] = None) -> IpSolution:
    budget = settings.dp_state_budget if state_budget is None else state_budget
    n = model.counts
    m = model.machines
    d = model.d
    radix = n + 1
    strides = np.cumprod(np.concatenate(([1], radix[:-1]))).astype(np.int64) if d else np.zeros(0, np.int64)
    size = int(np.prod(radix)) if d else 1
    q = len(model.configs)
    if size * (m + 1) > budget or size * q > budget:
        raise ConfigExplosionError(
            f"profile DP needs {size} profiles x {m + 1} machine counts with {q} configurations, "
            f"over the budget of {budget}"
        )

    idx = np.arange(size, dtype=np.int64)
    digits = (idx[:, None] // strides[None, :]) % radix[None, :] if d else np.zeros((1, 0), np.int64)
    full = size - 1
    moves = []
    for c in model.configs:
        src = np.flatnonzero(np.all(digits + c[None, :] <= n[None, :], axis=1))
        moves.append((src, src + int(c @ strides) if d else src))

    values = [np.full(size, np.inf)]
    values[0][full] = 0.0
    for _ in range(m):
        prev = values[-1]
        cur = np.full(size, np.inf)
        for cost, (src, dst) in zip(costs, moves):
            cur[src] = np.minimum(cur[src], combine(cost, prev[dst]))
        values.append(cur)

    best = values[m][0]
    if not math.isfinite(best):
        raise InfeasibleError(
            f"no placement of {model.job_count} jobs on {m} machines respects the cap {model.cap:.6g}"
        )

    # forward traceback choosing the first optimal configuration at each step
    sequence: List[Tuple[int, ...]] = []
    p = 0
    for j in range(m, 0, -1):
        target = values[j][p]
        tol = _TIE_RTOL * max(1.0, abs(target))
        for ci, c in enumerate(model.configs):
            if np.any(digits[p] + c > n):
                continue
            nxt = p + int(c @ strides) if d else p
            if combine(costs[ci], values[j - 1][nxt]) <= target + tol:
                sequence.append(tuple(int(v) for v in c))
                p = nxt
                break
        else:
            raise SolverError("profile DP traceback lost the optimal path")

    counts: Dict[Tuple[int, ...], int] = {}
    for c in sequence:
        counts[c] = counts.get(c, 0) + 1
    return IpSolution(objective=float(best), multiplicities=counts, machine_configs=tuple(sequence))


def check_solution(model: ConfigModel, solution: IpSolution):
    """Raise SolverError unless the multiplicities satisfy every constraint of the program."""
    if solution.total_machines() != model.machines:
        raise SolverError(f"solution uses {solution.total_machines()} machines, expected {model.machines}")
    used = np.zeros(model.d, dtype=np.int64)
    for c, x in solution.multiplicities.items():
        vec = np.asarray(c, dtype=np.int64)
        if x < 0 or np.any(vec < 0) or not _fits(float(vec @ model.distinct_sizes), model.cap):
            raise SolverError(f"configuration {c} with multiplicity {x} is not admissible")
        used += x * vec
    if not np.array_equal(used, model.counts):
        raise SolverError(f"solution places {used.tolist()} jobs per size, expected {model.counts.tolist()}")


def _capped_lpt(model: ConfigModel) -> Optional[List[Tuple[int, ...]]]:
    """Per-machine configurations from LPT, or None if LPT breaks the cap."""
    heap = [(0.0, j) for j in range(model.machines)]
    per_machine = [[0] * model.d for _ in range(model.machines)]
    for k in range(model.d - 1, -1, -1):
        size = float(model.distinct_sizes[k])
        for _ in range(int(model.counts[k])):
            load, j = heapq.heappop(heap)
            load += size
            if not _fits(load, model.cap):
                return None
            per_machine[j][k] += 1
            heapq.heappush(heap, (load, j))
    return [tuple(c) for c in per_machine]


def solve_config_ip(model: ConfigModel, f: CostFunction, linear: bool = False,
                    state_budget: Optional[int] = None) -> IpSolution:
    """
    Exact minimiser of sum_c x_c f(c . pi).

    With `linear=True` the caller promises f(x) = a x + b, so every feasible
    solution is optimal and a capped LPT placement is returned when it exists.

    Raises:
        InfeasibleError: when no solution satisfies the constraints
        ConfigExplosionError: when the profile space exceeds the state budget
    """
    if linear:
        sequence = _capped_lpt(model)
        if sequence is not None:
            counts: Dict[Tuple[int, ...], int] = {}
            for c in sequence:
                counts[c] = counts.get(c, 0) + 1
            pi = model.distinct_sizes
            objective = math.fsum(float(f(float(np.asarray(c) @ pi))) for c in sequence)
            solution = IpSolution(objective=objective, multiplicities=counts, machine_configs=tuple(sequence))
            check_solution(model, solution)
            logger.debug(f"Linear objective solved by capped LPT on {model.machines} machines")
            return solution
        logger.debug("Capped LPT broke the cap; falling back to the profile DP")

    costs = _config_costs(model, f)
    solution = _profile_dp(model, costs, lambda cost, rest: cost + rest, state_budget)
    check_solution(model, solution)
    return solution


def solve_makespan_profile(model: ConfigModel, state_budget: Optional[int] = None) -> IpSolution:
    """Minimal achievable maximum configuration load; the objective is that makespan."""
    costs = model.config_loads.astype(float)
    solution = _profile_dp(model, costs, np.maximum, state_budget)
    check_solution(model, solution)
    return solution


def extract_assignment(solution: IpSolution, rounded_sizes: Sequence[float],
                       distinct_sizes: Sequence[float]) -> Assignment:
    """
    Expand configurations into machines and fill their slots with concrete jobs.

    Machines take the configurations in traceback order (or sorted order when
    only multiplicities are known). Within each size class, jobs in index order
    go round-robin over the machines that still have a free slot of that size.
    """
    pi = np.asarray(distinct_sizes, dtype=float)
    sizes = np.asarray(rounded_sizes, dtype=float)
    if solution.machine_configs:
        machines = list(solution.machine_configs)
    else:
        machines = []
        for c in sorted(solution.multiplicities):
            machines.extend([c] * solution.multiplicities[c])
    m = len(machines)

    klass = np.searchsorted(pi, sizes)
    klass = np.clip(klass, 0, max(pi.size - 1, 0))
    if sizes.size and not np.allclose(pi[klass], sizes, rtol=1e-12, atol=0.0):
        raise SolverError("a rounded job size matches no configuration size")

    mapping = [-1] * sizes.size
    for k in range(pi.size):
        jobs = [int(i) for i in np.flatnonzero(klass == k)]
        slots = [machines[j][k] for j in range(m)]
        if sum(slots) != len(jobs):
            raise SolverError(f"size class {k}: {len(jobs)} jobs but {sum(slots)} slots")
        pos = 0
        rnd = 0
        while pos < len(jobs):
            for j in range(m):
                if slots[j] > rnd and pos < len(jobs):
                    mapping[jobs[pos]] = j
                    pos += 1
            rnd += 1
    return Assignment.from_mapping(sizes.tolist(), mapping, m)
