import math

import numpy as np
import pytest

from poissonbalance.exceptions import GuardError
from poissonbalance.models.instance_model import JobInstance
from poissonbalance.utils.poisson_core import cdf, expected_max, iid_expected_max
from poissonbalance.verification.oracle_harness import (
    REPORT_COLUMNS,
    LoadProfile,
    appendix_counterexample,
    appendix_sweep,
    brute_force_opt,
    enumerate_partitions,
    mc_agreement_battery,
    monte_carlo_emax,
    peak_battery,
    proposition_a1_check,
    proposition_a1_sweep,
    proposition_a1_trend,
    scaling_report,
    stirling_partition_count,
    verify_case_lemma,
)


def test_stirling_numbers():
    assert stirling_partition_count(0, 0) == 1
    assert stirling_partition_count(4, 2) == 7
    assert stirling_partition_count(5, 3) == 25
    assert stirling_partition_count(3, 5) == 0


@pytest.mark.parametrize("n", range(0, 7))
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_partition_enumeration_counts(n, k):
    seen = list(enumerate_partitions(n, k))
    assert len(seen) == len(set(seen))
    assert len(seen) == sum(stirling_partition_count(n, j) for j in range(k + 1))


def test_brute_force_small_examples():
    _, value = brute_force_opt(JobInstance(machines=1, sizes=(1.0,)))
    assert value == pytest.approx(1.0, abs=1e-8)

    assignment, value = brute_force_opt(JobInstance(machines=2, sizes=(1.0,) * 4))
    assert sorted(assignment.loads) == [2.0, 2.0]
    assert value == pytest.approx(expected_max([2.0, 2.0]))

    assignment, value = brute_force_opt(JobInstance(machines=2, sizes=(5.0, 1.0)))
    assert sorted(assignment.loads) == [1.0, 5.0]
    assert value == pytest.approx(expected_max([5.0, 1.0]))


def test_brute_force_guard():
    with pytest.raises(GuardError):
        brute_force_opt(JobInstance(machines=5, sizes=(1.0,)))
    with pytest.raises(GuardError):
        brute_force_opt(JobInstance(machines=2, sizes=(1.0,) * 13))


def test_monte_carlo_degenerate_and_reproducible():
    assert monte_carlo_emax([0.0], trials=100, seed=1) == (0.0, 0.0)
    assert monte_carlo_emax([3.0], trials=1, seed=1)[1] == 0.0
    first = monte_carlo_emax([1.0, 2.0], trials=5000, seed=11, streams=3, workers=1)
    again = monte_carlo_emax([1.0, 2.0], trials=5000, seed=11, streams=3, workers=3)
    assert first == again


def test_monte_carlo_agrees_with_exact():
    estimate, se = monte_carlo_emax([1.0, 1.0], trials=200_000, seed=3)
    assert abs(estimate - expected_max([1.0, 1.0])) <= 4.0 * se
    rows = mc_agreement_battery(count=3, trials=50_000, seed=4)
    assert all(row.asserted and row.passed for row in rows)


def test_large_load_rows_hold():
    rows = verify_case_lemma(1, LoadProfile(machines=100, mu=3000.0), 0.1)
    assert [row.lemma for row in rows] == ["case1.lower", "case1.upper"]
    assert all(row.guard_ok and row.asserted and row.passed for row in rows)


def test_sparse_load_rows_hold():
    rows = verify_case_lemma(5, LoadProfile(machines=200_000, mu=1e-4), 0.1)
    assert len(rows) == 3
    assert all(row.guard_ok and row.asserted and row.passed for row in rows)


def test_middle_case_rows_are_reported_only():
    rows = verify_case_lemma(4, LoadProfile(machines=10 ** 6, mu=(10 ** 6) ** -0.3), 0.25)
    assert [row.lemma for row in rows] == ["case4.lower", "case4.upper", "case4.focus"]
    assert not any(row.asserted for row in rows)
    with pytest.raises(ValueError):
        verify_case_lemma(6, LoadProfile(machines=10, mu=1.0), 0.1)


def test_load_profile_spread():
    loads = LoadProfile(machines=50, mu=2.0, spread=2.0, seed=3).loads()
    assert loads.size == 50
    assert loads.min() >= 0.5 - 1e-12
    assert loads.max() <= 8.0 + 1e-12
    assert np.allclose(loads / 2.0 * 20.0, np.round(loads / 2.0 * 20.0))
    with pytest.raises(ValueError):
        LoadProfile(machines=5, mu=1.0, spread=3.0)


def test_scaling_report():
    row = scaling_report(5, LoadProfile(machines=200_000, mu=1e-4), 0.1)
    assert row.lemma == "case5.scaling"
    assert row.asserted and row.passed
    with pytest.raises(ValueError):
        scaling_report(1, LoadProfile(machines=10, mu=1.0), 0.1)


def test_peak_battery():
    rows = peak_battery(count=6, seed=2)
    assert len(rows) == 6
    assert all(row.asserted and row.passed for row in rows)


def test_counterexample_at_three_machines():
    beta = 10.0 / math.log(2.0)
    balanced, lopsided, gap = appendix_counterexample(3, beta)
    assert balanced == pytest.approx(expected_max([20.0, 20.0]), rel=1e-9)
    assert lopsided == pytest.approx(expected_max([20.0, 10.0, 10.0]), rel=1e-9)
    assert gap == pytest.approx(balanced - lopsided)
    for bad in (1, 4, 10):
        with pytest.raises(ValueError):
            appendix_counterexample(bad)


def test_balanced_split_loses_with_many_machines():
    rows = appendix_sweep([10 ** 3 + 1, 10 ** 5 + 1])
    assert [row.asserted for row in rows] == [False, True]
    assert rows[-1].passed
    assert rows[-1].rhs > rows[-1].lhs


def test_small_rate_sandwich():
    with pytest.raises(GuardError):
        proposition_a1_check(10 ** 6, 1.0, 0.5, strict=True)
    with pytest.raises(GuardError):
        proposition_a1_check(1000, 1e-4, 0.5, strict=True)
    m = 1000
    row = proposition_a1_check(m, 1.0 / m, 0.5)
    assert row.guard_ok
    assert row.lhs == pytest.approx(iid_expected_max(1.0 / m, m))
    assert row.lhs >= 1.0 - cdf(1.0 / m, 0) ** m
    assert not row.asserted

    rows, fractions = proposition_a1_sweep([1000], delta=0.5, lambdas_per_m=3)
    assert len(rows) == 3
    assert 0.0 <= fractions[1000] <= 1.0


def test_small_rate_out_of_range_is_reported():
    # ln(10**6)/16 < 1, so the plug-in rate sits above the range
    row = proposition_a1_check(10 ** 6, 1.0, 0.5)
    assert not row.guard_ok
    assert not row.asserted
    assert row.lhs == pytest.approx(iid_expected_max(1.0, 10 ** 6))
    assert "lambda=1;" in row.params


def test_small_rate_trend_holds_on_pinned_rates():
    ms = (10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6)
    rows, fractions = proposition_a1_trend(ms, delta=0.5)
    assert len(rows) == 5 * len(ms)
    assert all(row.guard_ok for row in rows)
    assert all(row.passed for row in rows)
    ordered = [fractions[m] for m in ms]
    assert ordered == sorted(ordered)
    with pytest.raises(ValueError):
        proposition_a1_trend(ms, exponents=(0.0,))


def test_csv_row_format():
    row = peak_battery(count=1)[0]
    out = row.as_csv_row()
    assert tuple(out) == REPORT_COLUMNS
    assert out["pass"] == "true"
    assert out["guard_ok"] == "true"
    assert out["lhs"] == "400"
