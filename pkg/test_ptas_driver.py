import pytest

from poissonbalance.models.instance_model import JobInstance, exact_expected_max_of, peel_big_jobs
from poissonbalance.models.models import CaseTag, TransitionKind
from poissonbalance.solvers.config_ip import build_config_model, solve_config_ip
from poissonbalance.solvers.ptas_driver import (
    CASE2_TARGET,
    SolveHooks,
    case2_search,
    describe_run,
    ptas_solve,
)
from poissonbalance.solvers.transition import t3_of, t4_of
from poissonbalance.utils.poisson_core import survival
from poissonbalance.verification.oracle_harness import brute_force_opt

from conftest import instance_suite


def test_all_peeled_when_jobs_fit_one_per_machine():
    run = describe_run(JobInstance(machines=3, sizes=(1.0, 2.0)), 0.5)
    assert run.branch == CaseTag.ALL_PEELED
    assert sorted(run.assignment.loads) == [0.0, 1.0, 2.0]


def test_forced_branch_keeps_the_all_peeled_shortcut():
    run = describe_run(JobInstance(machines=3, sizes=(1.0, 2.0)), 0.5, SolveHooks(force_case=CaseTag.CASE2))
    assert run.branch == CaseTag.ALL_PEELED
    assert sorted(run.assignment.loads) == [0.0, 1.0, 2.0]


def test_small_machine_counts_go_to_the_dp():
    run = describe_run(JobInstance(machines=2, sizes=(1.0, 1.0, 1.0, 1.0)), 0.5)
    assert run.branch == CaseTag.DP
    assert run.solver == "dp"
    assert run.assignment.loads == (2.0, 2.0)


def test_huge_loads_take_the_deterministic_branch():
    run = describe_run(JobInstance(machines=2, sizes=(1e7,) * 4), 0.5)
    assert run.branch == CaseTag.CASE1
    assert run.assignment.loads == (2e7, 2e7)


def test_sparse_loads_take_the_linear_branch():
    m = 60_000
    instance = JobInstance(machines=m, sizes=(2.5e-4,) * (2 * m))
    run = describe_run(instance, 0.5, SolveHooks(delta=0.1))
    assert run.branch == CaseTag.CASE5
    assert run.mu == pytest.approx(5e-4)
    assert len(run.assignment.mapping) == 2 * m
    assert max(run.assignment.loads) <= 4.0 * run.mu + 1e-12


def test_forced_threshold_branch_reports_t2():
    instance = JobInstance(machines=3, sizes=(2.0, 2.0, 1.0, 1.0, 1.0, 1.0))
    run = describe_run(instance, 0.5, SolveHooks(delta=0.1, force_case=CaseTag.CASE2))
    assert run.branch == CaseTag.CASE2
    assert run.transition.kind == TransitionKind.T2
    assert run.ip_probes >= 2
    assert sum(run.assignment.loads) == pytest.approx(8.0)


def test_forced_rate_branch_reports_t3():
    instance = JobInstance(machines=3, sizes=(0.5,) * 6)
    run = describe_run(instance, 0.5, SolveHooks(delta=0.1, force_case=CaseTag.CASE3))
    assert run.branch == CaseTag.CASE3
    assert run.solver == "det_schedule"
    assert run.transition.kind == TransitionKind.T3
    assert run.transition.value == pytest.approx(t3_of(3, 1.0))
    assert run.transition.m == 3
    assert sum(run.assignment.loads) == pytest.approx(3.0)


def test_forced_bernoulli_branch_reports_t4():
    instance = JobInstance(machines=3, sizes=(0.025,) * 6)
    run = describe_run(instance, 0.5, SolveHooks(delta=0.1, force_case=CaseTag.CASE4))
    assert run.branch == CaseTag.CASE4
    assert run.transition.kind == TransitionKind.T4
    assert run.transition.value == t4_of(3, 0.05)
    assert max(run.assignment.loads) <= 0.2 + 1e-12


def test_case2_search_returns_the_first_good_threshold():
    model = build_config_model([1.0, 1.0, 1.0, 2.0, 2.0, 2.0], 3, 12.0)
    t2, count, probes = case2_search(model, 3.0, 3)
    assert count == len(probes)
    assert probes[t2] < CASE2_TARGET
    if t2 > 3:
        below = solve_config_ip(model, lambda x: survival(x, t2)).objective
        assert below >= CASE2_TARGET
    seen = [value for _, value in sorted(probes.items())]
    assert all(b <= a + 1e-12 for a, b in zip(seen, seen[1:]))


def test_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        ptas_solve(JobInstance(machines=2, sizes=(1.0,)), 1.0)


def test_ptas_near_optimal_on_small_instances(small_instances):
    for instance in small_instances:
        _, best = brute_force_opt(instance)
        assignment = ptas_solve(instance, 0.5)
        assert assignment.machines == instance.machines
        assert len(assignment.mapping) == instance.n
        assert exact_expected_max_of(assignment) <= 1.5 * best + 1e-9


def test_peeled_jobs_end_up_alone(small_instances):
    for instance in small_instances:
        peel = peel_big_jobs(instance)
        assignment = ptas_solve(instance, 0.5)
        blocks = assignment.blocks()
        for job in peel.big_jobs:
            assert blocks[assignment.mapping[job]] == [job]


@pytest.mark.parametrize("epsilon", [0.3, 0.99])
def test_ptas_within_one_plus_epsilon(small_instances, epsilon):
    for instance in small_instances:
        _, best = brute_force_opt(instance)
        assignment = ptas_solve(instance, epsilon)
        assert exact_expected_max_of(assignment) <= (1.0 + epsilon) * best + 1e-9


def test_ptas_against_brute_force_up_to_eight_jobs():
    for instance in instance_suite(max_jobs=8, max_machines=3, per_shape=1, seed=11):
        _, best = brute_force_opt(instance)
        assignment = ptas_solve(instance, 0.5)
        assert exact_expected_max_of(assignment) <= 1.5 * best + 1e-9
