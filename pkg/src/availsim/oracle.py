"""Exact availability by enumerating every k-subset of the eligible services."""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Sequence

from availsim.core import (
    EndpointSpec,
    FailureScenario,
    Semantics,
    alive_graph,
    reachable_from,
)
from availsim.errors import BudgetExceededError, ValidationError
from availsim.graph import ServiceGraph
from availsim.simulation import SEMANTICS, EstimateRecord, kill_count

DEFAULT_BUDGET = 10**7


def _check(eligible: Sequence[str], k: int, budget: int) -> int:
    if not 1 <= k <= len(eligible):
        raise ValidationError(f"k={k} outside [1, {len(eligible)}]")
    total = comb(len(eligible), k)
    if total > budget:
        raise BudgetExceededError(
            f"C({len(eligible)}, {k}) = {total} subsets exceeds budget {budget}"
        )
    return total


def exact_counts(
    graph: ServiceGraph,
    endpoints: Sequence[EndpointSpec],
    eligible: Sequence[str],
    k: int,
    budget: int = DEFAULT_BUDGET,
) -> tuple[list[list[int]], int]:
    """Success counts ``[endpoint][semantics]`` over all k-subsets, and C(n, k).

    Evaluated on explicit alive graphs with set-based BFS, not the bitmask
    evaluator the simulator uses, so the two code paths stay independent.
    """
    total = _check(eligible, k, budget)
    for ep in endpoints:
        ep.check_bound(graph)
    counts = [[0, 0] for _ in endpoints]
    for combo in combinations(eligible, k):
        scenario = FailureScenario(frozenset(combo))
        for s, sem in enumerate(SEMANTICS):
            alive = alive_graph(graph, scenario, sem)
            for ep, row in zip(endpoints, counts):
                if ep.entry in scenario.killed:
                    continue
                reached = reachable_from(alive, ep.entry)
                row[s] += sum(t in reached for t in ep.targets) >= ep.required
    return counts, total


def exact_availability(
    graph: ServiceGraph,
    endpoint: EndpointSpec,
    eligible: Sequence[str],
    k: int,
    semantics: Semantics,
    budget: int = DEFAULT_BUDGET,
) -> Fraction:
    counts, total = exact_counts(graph, [endpoint], eligible, k, budget)
    return Fraction(counts[0][SEMANTICS.index(Semantics(semantics))], total)


def exact_delta(
    graph: ServiceGraph,
    endpoint: EndpointSpec,
    eligible: Sequence[str],
    k: int,
    budget: int = DEFAULT_BUDGET,
) -> Fraction:
    """Exact async minus all-blocking availability (never positive)."""
    counts, total = exact_counts(graph, [endpoint], eligible, k, budget)
    return Fraction(counts[0][1] - counts[0][0], total)


def exact_records(
    graph: ServiceGraph,
    endpoints: Sequence[EndpointSpec],
    eligible: Sequence[str],
    fractions: Sequence[float],
    rounding: str = "half_up",
    budget: int = DEFAULT_BUDGET,
) -> list[EstimateRecord]:
    """Oracle values in the predictions record shape (std_error 0, trials C(n, k))."""
    records = []
    for p in fractions:
        k = kill_count(p, len(eligible), rounding)
        counts, total = exact_counts(graph, endpoints, eligible, k, budget)
        for ep, row in zip(endpoints, counts):
            for sem, c in zip(SEMANTICS, row):
                records.append(EstimateRecord(
                    route=ep.route, semantics=sem, p_fail=p,
                    estimate=float(Fraction(c, total)), std_error=0.0,
                    trials=total, k_used=k, seed=None,
                ))
    return records
