from fractions import Fraction

import pytest

from availsim.core import EndpointSpec, Semantics
from availsim.errors import BudgetExceededError
from availsim.oracle import exact_availability, exact_delta, exact_records
from availsim.simulation import aggregate_availability, eligible_set, kill_count

ALL, ASYNC = Semantics.ALL_BLOCKING, Semantics.ASYNC


def test_g0_values(g0, g0_eligible):
    single = EndpointSpec("r", "F", ("A",))
    assert exact_availability(g0, single, g0_eligible, 1, ALL) == Fraction(3, 4)
    either = EndpointSpec("r", "F", ("A", "B"), "any_of")
    assert exact_availability(g0, either, g0_eligible, 1, ALL) == 1
    consumer = EndpointSpec("r", "F", ("C",))
    assert exact_availability(g0, consumer, g0_eligible, 1, ALL) == Fraction(1, 4)
    assert exact_availability(g0, consumer, g0_eligible, 1, ASYNC) == 0
    assert exact_delta(g0, consumer, g0_eligible, 1) == Fraction(-1, 4)


def test_demo_delta_is_zero(demo_graph, demo_endpoints, demo_disallow):
    eligible = eligible_set(demo_graph, demo_disallow)
    for ep in demo_endpoints:
        for k in range(1, len(eligible) + 1):
            assert exact_delta(demo_graph, ep, eligible, k) == 0


def test_budget(g0, g0_eligible):
    ep = EndpointSpec("r", "F", ("A",))
    with pytest.raises(BudgetExceededError, match="exceeds budget"):
        exact_availability(g0, ep, g0_eligible, 2, ALL, budget=5)
    assert exact_availability(g0, ep, g0_eligible, 2, ALL, budget=6) == Fraction(1, 2)


def test_monotone_in_k(demo_graph, demo_endpoints, demo_disallow):
    eligible = eligible_set(demo_graph, demo_disallow)
    for ep in demo_endpoints:
        values = [exact_availability(demo_graph, ep, eligible, k, ALL)
                  for k in range(1, len(eligible) + 1)]
        assert values == sorted(values, reverse=True)


def test_records_shape(g0, g0_eligible):
    recs = exact_records(g0, [EndpointSpec("r", "F", ("A",))], g0_eligible, (0.25, 0.5))
    assert [(r.k_used, r.trials, r.semantics) for r in recs] == [
        (1, 4, ALL), (1, 4, ASYNC), (2, 6, ALL), (2, 6, ASYNC)]
    assert all(r.std_error == 0 and r.seed is None for r in recs)


def test_half_even_reproduces_reference_model_column(demo_graph, demo_endpoints, demo_disallow):
    eligible = eligible_set(demo_graph, demo_disallow)
    fractions = (0.1, 0.3, 0.5, 0.7, 0.9)
    recs = exact_records(demo_graph, demo_endpoints, eligible, fractions, "half_even")
    agg = {a.p_fail: a.estimate for a in aggregate_availability(recs) if a.semantics is ALL}
    reference = {0.1: 0.781, 0.3: 0.610, 0.5: 0.356, 0.7: 0.251, 0.9: 0.050}
    for p, expected in reference.items():
        assert round(agg[p], 3) == expected, (p, agg[p])
    assert [kill_count(p, 15, "half_even") for p in fractions] == [2, 4, 8, 10, 14]
