import itertools
import math

import numpy as np
import pytest

from poissonbalance.exceptions import ConfigExplosionError, InfeasibleError
from poissonbalance.solvers.config_ip import (
    build_config_model,
    check_solution,
    enumerate_configs,
    extract_assignment,
    solve_config_ip,
    solve_makespan_profile,
)
from poissonbalance.utils.poisson_core import survival

COSTS = {
    "linear": lambda x: x,
    "square": lambda x: x * x,
    "survival": lambda x: survival(x, 3),
}


def exhaustive(sizes, machines, cap, f, combine=sum):
    """Best objective over every job -> machine map respecting the cap; inf when none does."""
    best = math.inf
    for mapping in itertools.product(range(machines), repeat=len(sizes)):
        loads = [0.0] * machines
        for job, machine in enumerate(mapping):
            loads[machine] += sizes[job]
        if max(loads) > cap * (1 + 1e-12):
            continue
        best = min(best, combine(f(x) for x in loads))
    return best


def random_cases(count=40, seed=5):
    gen = np.random.default_rng(seed)
    menu = (0.5, 1.0, 1.5, 2.0, 3.0)
    for _ in range(count):
        d = int(gen.integers(1, 4))
        pi = sorted(gen.choice(menu, size=d, replace=False).tolist())
        counts = gen.integers(1, 4, size=d)
        while counts.sum() > 8:
            counts[int(np.argmax(counts))] -= 1
        sizes = [p for p, c in zip(pi, counts) for _ in range(int(c))]
        machines = int(gen.integers(1, 4))
        total = sum(sizes)
        cap = float(gen.choice([total, max(max(sizes), 1.3 * total / machines)]))
        yield sizes, machines, cap


def test_enumerate_configs_in_lex_order():
    configs = enumerate_configs([1.0, 2.0], [2, 1], 3.0)
    assert configs.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1], [2, 0]]


def test_enumerate_configs_explosion_guard():
    with pytest.raises(ConfigExplosionError):
        enumerate_configs([1.0, 2.0], [5, 5], 100.0, limit=10)
    with pytest.raises(ValueError):
        enumerate_configs([2.0, 1.0], [1, 1], 3.0)


def test_build_model_rejects_jobs_above_the_cap():
    with pytest.raises(InfeasibleError):
        build_config_model([1.0, 5.0], 2, 4.0)
    model = build_config_model([2.0, 1.0, 2.0], 2, 4.0)
    assert model.distinct_sizes.tolist() == [1.0, 2.0]
    assert model.counts.tolist() == [1, 2]
    assert model.job_count == 3


@pytest.mark.parametrize("name", sorted(COSTS))
def test_solver_matches_exhaustive_search(name):
    f = COSTS[name]
    for sizes, machines, cap in random_cases():
        expected = exhaustive(sizes, machines, cap, f)
        model = build_config_model(sizes, machines, cap)
        if math.isinf(expected):
            with pytest.raises(InfeasibleError):
                solve_config_ip(model, f)
            continue
        solution = solve_config_ip(model, f)
        assert solution.objective == pytest.approx(expected, abs=1e-9, rel=1e-9)
        check_solution(model, solution)


def test_linear_fast_path_agrees_with_the_dp():
    for sizes, machines, cap in random_cases(count=20, seed=9):
        model = build_config_model(sizes, machines, cap)
        if math.isinf(exhaustive(sizes, machines, cap, lambda x: x)):
            continue
        fast = solve_config_ip(model, lambda x: 2.0 * x + 1.0, linear=True)
        exact = solve_config_ip(model, lambda x: 2.0 * x + 1.0)
        assert fast.objective == pytest.approx(exact.objective, rel=1e-12)


def test_makespan_profile_matches_exhaustive_search():
    for sizes, machines, cap in random_cases(count=25, seed=13):
        expected = exhaustive(sizes, machines, cap, lambda x: x, combine=max)
        model = build_config_model(sizes, machines, cap)
        if math.isinf(expected):
            with pytest.raises(InfeasibleError):
                solve_makespan_profile(model)
            continue
        assert solve_makespan_profile(model).objective == pytest.approx(expected, rel=1e-12)


def test_state_budget_guard():
    model = build_config_model([1.0] * 6 + [2.0] * 6, 3, 100.0)
    with pytest.raises(ConfigExplosionError):
        solve_config_ip(model, lambda x: x * x, state_budget=10)


def test_extract_assignment_realises_the_configurations():
    sizes = [1.0, 2.0, 1.0, 2.0, 1.0]
    model = build_config_model(sizes, 2, 10.0)
    solution = solve_config_ip(model, lambda x: x * x)
    assignment = extract_assignment(solution, sizes, model.distinct_sizes)
    assert sorted(assignment.loads) == sorted(
        float(np.asarray(c) @ model.distinct_sizes) for c in solution.machine_configs
    )
    assert sorted(assignment.loads) == [3.0, 4.0]
