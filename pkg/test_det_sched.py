import itertools

import pytest

from conftest import instance_suite
from poissonbalance.models.instance_model import JobInstance, exact_expected_max_of
from poissonbalance.models.models import GreedyOrder
from poissonbalance.solvers.det_sched import (
    det_schedule,
    graham_greedy,
    makespan,
    mean_substitution_solve,
)
from poissonbalance.verification.oracle_harness import brute_force_opt


def optimal_makespan(sizes, m):
    best = float("inf")
    for mapping in itertools.product(range(m), repeat=len(sizes)):
        loads = [0.0] * m
        for job, machine in enumerate(mapping):
            loads[machine] += sizes[job]
        best = min(best, max(loads))
    return best


def test_greedy_lpt_hand_simulation():
    assignment = graham_greedy([3, 3, 2, 2, 2], 2)
    assert assignment.loads == (7.0, 5.0)


def test_greedy_given_order_and_ties():
    assignment = graham_greedy([1, 2, 3], 2, order=GreedyOrder.GIVEN)
    assert assignment.mapping == (0, 1, 0)
    assert assignment.loads == (4.0, 2.0)
    assert graham_greedy([1, 2, 3], 1).loads == (6.0,)
    with pytest.raises(ValueError):
        graham_greedy([1.0], 0)


def test_det_schedule_finds_the_perfect_split():
    sizes = [3, 3, 2, 2, 2]
    assignment = det_schedule(sizes, 2, 0.1)
    assert makespan(sizes, assignment) == pytest.approx(6.0)


def test_det_schedule_trivial_shapes():
    assert makespan([2.0] * 6, det_schedule([2.0] * 6, 3, 0.2)) == pytest.approx(4.0)
    few = det_schedule([1.0, 5.0], 3, 0.2)
    assert sorted(few.loads) == [0.0, 1.0, 5.0]
    assert det_schedule([], 2, 0.5).loads == (0.0, 0.0)


def test_det_schedule_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        det_schedule([1.0], 1, 0.0)
    with pytest.raises(ValueError):
        det_schedule([1.0], 1, 1.0)


def test_det_schedule_is_near_optimal_on_small_instances():
    for instance in instance_suite(max_jobs=6, max_machines=3, per_shape=2, seed=21):
        opt = optimal_makespan(instance.sizes, instance.machines)
        got = makespan(instance.sizes, det_schedule(instance.sizes, instance.machines, 0.5))
        assert got <= 1.5 * opt + 1e-9


def test_greedy_makespan_within_graham_bound():
    for instance in instance_suite(max_jobs=6, max_machines=3, per_shape=2, seed=22):
        opt = optimal_makespan(instance.sizes, instance.machines)
        assert max(graham_greedy(instance.sizes, instance.machines).loads) <= 2.0 * opt + 1e-9


def test_greedy_expected_max_within_twice_optimum(small_instances):
    for instance in small_instances:
        _, best = brute_force_opt(instance)
        greedy = graham_greedy(instance.sizes, instance.machines)
        assert exact_expected_max_of(greedy) <= 2.0 * best + 1e-9


def test_mean_substitution_single_job_and_determinism():
    single = JobInstance(machines=3, sizes=(4.0,))
    assert sorted(mean_substitution_solve(single, 0.3).loads) == [0.0, 0.0, 4.0]
    instance = JobInstance(machines=2, sizes=(1.0, 2.0, 2.5, 0.5, 3.0))
    assert mean_substitution_solve(instance, 0.3) == mean_substitution_solve(instance, 0.3)
