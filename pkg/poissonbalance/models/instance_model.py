import logging
import math
from typing import Dict, List, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from poissonbalance.exceptions import PeelExhaustedError, SolverError
from poissonbalance.utils.poisson_core import expected_max

logger = logging.getLogger(__name__)


def _check_sizes(values: Sequence[float]) -> Tuple[float, ...]:
    out = tuple(float(v) for v in values)
    for v in out:
        if not math.isfinite(v) or v < 0.0:
            raise ValueError(f"job sizes must be finite and non-negative, got {v!r}")
    return out


class JobInstance(BaseModel):
    """m identical machines and n jobs with Poisson rates (sizes)."""

    model_config = ConfigDict(frozen=True)

    machines: int
    sizes: Tuple[float, ...] = ()

    @field_validator("machines")
    @classmethod
    def _check_machines(cls, value: int) -> int:
        if value < 1:
            raise ValueError("machines must be at least 1")
        return value

    @field_validator("sizes", mode="before")
    @classmethod
    def _check_sizes(cls, value):
        return _check_sizes(value)

    @property
    def n(self) -> int:
        return len(self.sizes)


class Assignment(BaseModel):
    """Job -> machine map (0-based on both sides) with the per-machine loads it induces."""

    model_config = ConfigDict(frozen=True)

    machines: int
    mapping: Tuple[int, ...]
    loads: Tuple[float, ...]

    @model_validator(mode="after")
    def _check_consistent(self):
        if len(self.loads) != self.machines:
            raise ValueError(f"expected {self.machines} loads, got {len(self.loads)}")
        for job, machine in enumerate(self.mapping):
            if not 0 <= machine < self.machines:
                raise ValueError(f"job {job} mapped to machine {machine}, outside [0, {self.machines})")
        return self

    @classmethod
    def from_mapping(cls, sizes: Sequence[float], mapping: Sequence[int], machines: int) -> "Assignment":
        mapping = tuple(int(j) for j in mapping)
        return cls(machines=machines, mapping=mapping, loads=_loads(sizes, mapping, machines))

    def blocks(self) -> List[List[int]]:
        """Job indices per machine, each block ascending."""
        out: List[List[int]] = [[] for _ in range(self.machines)]
        for job, machine in enumerate(self.mapping):
            out[machine].append(job)
        return out


class PeelResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    big_jobs: Tuple[int, ...]
    big_sizes: Tuple[float, ...]
    remaining_jobs: Tuple[int, ...]
    remaining_sizes: Tuple[float, ...]
    m1: int
    mu: float


def _loads(sizes: Sequence[float], mapping: Sequence[int], machines: int) -> Tuple[float, ...]:
    if len(mapping) != len(sizes):
        raise SolverError(f"mapping covers {len(mapping)} jobs but the instance has {len(sizes)}")
    per_machine: List[List[float]] = [[] for _ in range(machines)]
    for job, machine in enumerate(mapping):
        if not 0 <= machine < machines:
            raise SolverError(f"job {job} mapped to machine {machine}, outside [0, {machines})")
        per_machine[machine].append(sizes[job])
    return tuple(math.fsum(block) for block in per_machine)


def loads_of(instance: JobInstance, mapping: Sequence[int]) -> Tuple[float, ...]:
    return _loads(instance.sizes, mapping, instance.machines)


def exact_expected_max_of(assignment: Assignment, tail_tol: float = 1e-9) -> float:
    """Expected maximum load over all m machines of an assignment."""
    return expected_max(assignment.loads, tail_tol)


def peel_big_jobs(instance: JobInstance) -> PeelResult:
    """
    Remove, largest first, every job bigger than the average load of what is left.

    Each peeled job takes a machine of its own. Ties with the average are kept.

    Raises:
        PeelExhaustedError: if machines run out while jobs remain
    """
    sizes = instance.sizes
    order = sorted(range(len(sizes)), key=lambda i: (-sizes[i], i))
    remaining_total = math.fsum(sizes)
    m1 = instance.machines
    k = 0
    while k < len(order):
        if m1 == 0:
            raise PeelExhaustedError(
                f"peeling consumed all {instance.machines} machines with {len(order) - k} jobs left"
            )
        size = sizes[order[k]]
        if size <= remaining_total / m1:
            break
        remaining_total -= size
        m1 -= 1
        k += 1

    big = order[:k]
    rest = sorted(order[k:])
    rest_sizes = tuple(sizes[i] for i in rest)
    mu = math.fsum(rest_sizes) / m1 if m1 > 0 else 0.0
    if big:
        logger.debug(f"Peeled {len(big)} big jobs, m1={m1}, mu={mu:.6g}")
    return PeelResult(
        big_jobs=tuple(big),
        big_sizes=tuple(sizes[i] for i in big),
        remaining_jobs=tuple(rest),
        remaining_sizes=rest_sizes,
        m1=m1,
        mu=mu,
    )


def merge_peeled(instance: JobInstance, peel: PeelResult, sub_mapping: Sequence[int]) -> Assignment:
    """
    Combine an assignment of the remaining jobs with the peeled jobs.

    Remaining jobs use machines 0..m1-1 in the order of `sub_mapping`; peeled job
    number k goes alone on machine m1 + k.
    """
    if len(sub_mapping) != len(peel.remaining_jobs):
        raise SolverError("sub-assignment does not cover the remaining jobs")
    mapping = [0] * instance.n
    for local, job in enumerate(peel.remaining_jobs):
        machine = int(sub_mapping[local])
        if not 0 <= machine < peel.m1:
            raise SolverError(f"remaining job {job} mapped outside the {peel.m1} free machines")
        mapping[job] = machine
    for k, job in enumerate(peel.big_jobs):
        mapping[job] = peel.m1 + k
    return Assignment.from_mapping(instance.sizes, mapping, instance.machines)


def canonical_relabel(assignment: Assignment) -> Assignment:
    """Renumber machines in order of their smallest job; empty machines go last, in old order."""
    relabel: Dict[int, int] = {}
    for machine in assignment.mapping:
        if machine not in relabel:
            relabel[machine] = len(relabel)
    for machine in range(assignment.machines):
        if machine not in relabel:
            relabel[machine] = len(relabel)
    loads = [0.0] * assignment.machines
    for old, new in relabel.items():
        loads[new] = assignment.loads[old]
    return Assignment(
        machines=assignment.machines,
        mapping=tuple(relabel[j] for j in assignment.mapping),
        loads=tuple(loads),
    )


def assignment_from_blocks(instance: JobInstance, blocks: Sequence[Sequence[int]]) -> Assignment:
    """Build an assignment from per-machine job lists; every job must appear exactly once."""
    if len(blocks) > instance.machines:
        raise SolverError(f"{len(blocks)} blocks for {instance.machines} machines")
    mapping = [-1] * instance.n
    for machine, block in enumerate(blocks):
        for job in block:
            if not 0 <= job < instance.n:
                raise SolverError(f"unknown job index {job}")
            if mapping[job] != -1:
                raise SolverError(f"job {job} appears in more than one block")
            mapping[job] = machine
    missing = [j for j, machine in enumerate(mapping) if machine == -1]
    if missing:
        raise SolverError(f"jobs {missing} are not assigned")
    return Assignment.from_mapping(instance.sizes, mapping, instance.machines)
