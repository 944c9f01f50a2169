import math

import pytest

from poissonbalance.models.models import CaseTag
from poissonbalance.solvers.transition import (
    T2_MASS,
    bernoulli_w_case4,
    bernoulli_w_case5,
    case_guards,
    check_delta,
    classify,
    gamma4_of,
    concentration_window,
    survival_mass,
    t2_of,
    t3_identity_form,
    t3_of,
    t4_of,
)
from poissonbalance.utils.poisson_core import max_cdf, survival


def brute_t2(loads, upper=10_000):
    best = 0
    for t in range(upper):
        if math.fsum(survival(x, t) for x in loads) >= T2_MASS:
            best = t
        else:
            break
    return best


def test_check_delta_range():
    assert check_delta(0.1) == 0.1
    for bad in (0.0, -0.1, 0.2):
        with pytest.raises(ValueError):
            check_delta(bad)


def test_classify_case1_for_huge_loads():
    label = classify(1e7, 2, 0.1)
    assert label.tag == CaseTag.CASE1
    assert label.m1 == 2


def test_classify_case5_for_sparse_loads():
    assert classify(5e-4, 60_000, 0.1).tag == CaseTag.CASE5


def test_classify_falls_back_to_dp():
    assert classify(1.0, 3, 0.1).tag == CaseTag.DP
    assert classify(0.0, 1, 0.1).tag == CaseTag.DP


def test_middle_guards_are_out_of_reach_at_desk_scale():
    for mu in (1e-3, 0.05, 1.0, 30.0):
        guards = case_guards(mu, 10 ** 6, 0.1)
        assert not guards.case2
        assert not guards.case3
        assert not guards.case4


def test_t2_all_zero_loads():
    assert t2_of([0.0, 0.0]) == 0
    with pytest.raises(ValueError):
        t2_of([])


@pytest.mark.parametrize("loads", [[1.0], [0.3, 0.3, 0.3], [5.0, 2.0, 7.5], [40.0] * 12])
def test_t2_matches_linear_scan(loads):
    assert t2_of(loads) == brute_t2(loads)


def test_t2_is_the_last_t_with_enough_mass():
    loads = [3.0, 4.0, 9.0]
    t2 = t2_of(loads)
    assert survival_mass([3.0, 4.0, 9.0], [1, 1, 1], t2) >= T2_MASS
    assert survival_mass([3.0, 4.0, 9.0], [1, 1, 1], t2 + 1) < T2_MASS


def test_t2_at_least_the_peak_for_large_loads():
    assert t2_of([400.0]) >= 400
    assert t2_of([1000.0, 10.0, 500.0]) >= 1000


@pytest.mark.parametrize("loads", [[0.4, 0.4], [3.0, 4.0, 9.0], [12.5] * 6, [250.0, 1.0]])
@pytest.mark.parametrize("delta", [0.01, 0.1])
def test_t2_does_not_drop_when_loads_grow(loads, delta):
    before = t2_of(loads)
    after = t2_of([(1.0 + delta) * x for x in loads])
    assert after >= before
    assert t2_of([(1.0 + delta) ** 2 * x for x in loads]) >= after


def test_t3_forms_agree():
    value = t3_of(100, 0.1)
    assert value == pytest.approx(math.log(100) / (math.log(10) + math.log(math.log(100))))
    assert t3_identity_form(100, 0.1) == pytest.approx(value, rel=1e-12)
    with pytest.raises(ValueError):
        t3_of(2, 0.1)
    with pytest.raises(ValueError):
        t3_of(100, 0.0)


def test_t4_is_the_ceiling_of_gamma4():
    m = 10 ** 6
    mu = m ** -0.3
    assert t4_of(m, mu) == math.ceil(gamma4_of(m, mu))
    assert t4_of(m, mu) == 2


def test_concentration_window():
    assert concentration_window(100, 0.1) == (60, 180)
    assert concentration_window(0, 0.1) == (0, 0)


def test_bernoulli_variables():
    loads = [0.1, 0.2]
    w4 = bernoulli_w_case4(loads, 2)
    assert w4.support.tolist() == [1, 2]
    assert w4.pmf(1) == pytest.approx(max_cdf(loads, 1))
    w5 = bernoulli_w_case5(loads)
    assert w5.mean() == pytest.approx(1.0 - math.exp(-0.3))
    with pytest.raises(ValueError):
        bernoulli_w_case4(loads, 0)
