"""Per-scenario endpoint success: alive graph, reachability, success rules."""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from availsim.errors import ValidationError
from availsim.graph import ServiceGraph

RULES = ("all_of", "any_of", "k_of_n")


class Semantics(str, enum.Enum):
    ALL_BLOCKING = "all_blocking"
    ASYNC = "async"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class FailureScenario:
    killed: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "killed", frozenset(self.killed))


@dataclass(frozen=True)
class EndpointSpec:
    """An HTTP route: entry service, target services and a success rule.

    ``k`` is only meaningful for ``k_of_n``. Duplicate targets are collapsed
    while keeping first-seen order.
    """

    route: str
    entry: str
    targets: tuple[str, ...]
    rule: str = "all_of"
    k: int | None = None

    def __post_init__(self) -> None:
        targets = tuple(dict.fromkeys(self.targets))
        object.__setattr__(self, "targets", targets)
        if not targets:
            raise ValidationError(f"{self.route}: targets must be non-empty")
        if self.rule not in RULES:
            raise ValidationError(f"{self.route}: unknown rule {self.rule!r}")
        if self.rule == "k_of_n":
            if isinstance(self.k, bool) or not isinstance(self.k, int):
                raise ValidationError(f"{self.route}: k_of_n requires an integer k")
            if not 1 <= self.k <= len(targets):
                raise ValidationError(
                    f"{self.route}: k={self.k} outside [1, {len(targets)}]"
                )
        elif self.k is not None:
            raise ValidationError(f"{self.route}: k is only allowed for k_of_n")

    @property
    def required(self) -> int:
        """Number of distinct reachable targets needed for success."""
        if self.rule == "all_of":
            return len(self.targets)
        if self.rule == "any_of":
            return 1
        return self.k

    def check_bound(self, graph: ServiceGraph) -> None:
        for name in (self.entry, *self.targets):
            if name not in graph:
                raise ValidationError(f"{self.route}: service {name!r} not in graph")


def load_targets(document: str) -> list[EndpointSpec]:
    """Parse ``targets.json`` (route -> {entry, targets, rule})."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError("targets document must be an object keyed by route")
    endpoints = []
    for route, spec in doc.items():
        if not isinstance(spec, dict) or set(spec) != {"entry", "targets", "rule"}:
            raise ValidationError(f"{route}: expected exactly keys entry, targets, rule")
        rule = spec["rule"]
        if not isinstance(rule, dict) or "type" not in rule:
            raise ValidationError(f"{route}: rule must be an object with 'type'")
        if set(rule) - {"type", "k"}:
            raise ValidationError(f"{route}: unknown keys in rule")
        if rule["type"] == "k_of_n" and "k" not in rule:
            raise ValidationError(f"{route}: k_of_n rule requires 'k'")
        targets = spec["targets"]
        if not isinstance(targets, list) or not all(isinstance(t, str) for t in targets):
            raise ValidationError(f"{route}: targets must be an array of strings")
        if not isinstance(spec["entry"], str):
            raise ValidationError(f"{route}: entry must be a string")
        endpoints.append(
            EndpointSpec(route, spec["entry"], tuple(targets), rule["type"], rule.get("k"))
        )
    return endpoints


def save_targets(endpoints: Iterable[EndpointSpec]) -> str:
    doc = {}
    for ep in endpoints:
        rule: dict = {"type": ep.rule}
        if ep.rule == "k_of_n":
            rule["k"] = ep.k
        doc[ep.route] = {"entry": ep.entry, "targets": list(ep.targets), "rule": rule}
    return json.dumps(doc, indent=2) + "\n"


def alive_graph(
    graph: ServiceGraph, scenario: FailureScenario, semantics: Semantics
) -> ServiceGraph:
    unknown = scenario.killed - set(graph.names)
    if unknown:
        raise ValidationError(f"killed services not in graph: {sorted(unknown)}")
    drop_async = Semantics(semantics) is Semantics.ASYNC
    return ServiceGraph(
        tuple(s for s in graph.services if s.name not in scenario.killed),
        tuple(
            e
            for e in graph.edges
            if e.source not in scenario.killed
            and e.target not in scenario.killed
            and not (drop_async and e.is_async)
        ),
    )


def reachable_from(graph: ServiceGraph, start: str) -> set[str]:
    """Services reachable from ``start`` (inclusive); empty if ``start`` is absent."""
    if start not in graph:
        return set()
    succ: dict[str, list[str]] = {}
    for e in graph.edges:
        succ.setdefault(e.source, []).append(e.target)
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in succ.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def endpoint_success(
    graph: ServiceGraph,
    endpoint: EndpointSpec,
    scenario: FailureScenario,
    semantics: Semantics,
) -> bool:
    if endpoint.entry in scenario.killed:
        return False
    reached = reachable_from(alive_graph(graph, scenario, semantics), endpoint.entry)
    return sum(t in reached for t in endpoint.targets) >= endpoint.required


class Evaluator:
    """Bitmask fast path for :func:`endpoint_success` on one graph.

    Killed sets are integer masks over ``graph.services`` order. Reachable sets
    are memoised per (entry, semantics, killed mask), so repeated scenarios cost
    one dict lookup.
    """

    cache_limit = 1 << 20

    def __init__(self, graph: ServiceGraph, endpoints: Iterable[EndpointSpec]):
        self.graph = graph
        self.endpoints = list(endpoints)
        for ep in self.endpoints:
            ep.check_bound(graph)
        self._succ = {
            Semantics.ALL_BLOCKING: graph.successor_masks(include_async=True),
            Semantics.ASYNC: graph.successor_masks(include_async=False),
        }
        self._entry = [graph.index(ep.entry) for ep in self.endpoints]
        self._targets = [
            [1 << graph.index(t) for t in ep.targets] for ep in self.endpoints
        ]
        self._required = [ep.required for ep in self.endpoints]
        self._cache: dict[tuple[int, Semantics, int], int] = {}

    def mask_of(self, names: Iterable[str]) -> int:
        mask = 0
        for n in names:
            mask |= 1 << self.graph.index(n)
        return mask

    def reach(self, entry: int, killed: int, semantics: Semantics) -> int:
        key = (entry, semantics, killed)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if killed >> entry & 1:
            reached = 0
        else:
            succ = self._succ[semantics]
            alive = ~killed
            reached = frontier = 1 << entry
            while frontier:
                nxt = 0
                while frontier:
                    low = frontier & -frontier
                    nxt |= succ[low.bit_length() - 1]
                    frontier ^= low
                frontier = nxt & alive & ~reached
                reached |= frontier
        if len(self._cache) >= self.cache_limit:
            self._cache.clear()
        self._cache[key] = reached
        return reached

    def success(self, i: int, killed: int, semantics: Semantics) -> bool:
        reached = self.reach(self._entry[i], killed, semantics)
        if not reached:
            return False
        hits = sum(1 for bit in self._targets[i] if reached & bit)
        return hits >= self._required[i]

    def success_all(self, killed: int, semantics: Semantics) -> list[bool]:
        return [self.success(i, killed, semantics) for i in range(len(self.endpoints))]
