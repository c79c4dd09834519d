"""Service dependency graph and its ``graph.json`` form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

from availsim.errors import ValidationError


@dataclass(frozen=True, order=True)
class ServiceNode:
    name: str
    replicas: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError(f"service name must be a non-empty string, got {self.name!r}")
        if isinstance(self.replicas, bool) or not isinstance(self.replicas, int):
            raise ValidationError(f"replicas of {self.name!r} must be an integer")
        if self.replicas < 1:
            raise ValidationError(f"replicas of {self.name!r} must be >= 1, got {self.replicas}")


@dataclass(frozen=True, order=True)
class Edge:
    source: str
    target: str
    is_async: bool = False

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class ServiceGraph:
    """Immutable directed graph; services sorted by name, edges by (source, target).

    Construction validates every invariant, so an instance is always well formed.
    Use :meth:`from_edges` to merge an edge multiset (e.g. straight from traces).
    """

    services: tuple[ServiceNode, ...] = ()
    edges: tuple[Edge, ...] = ()
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        services = tuple(sorted(self.services, key=lambda s: s.name))
        names = [s.name for s in services]
        for a, b in zip(names, names[1:]):
            if a == b:
                raise ValidationError(f"duplicate service name {a!r}")
        known = set(names)
        edges = tuple(sorted(self.edges, key=lambda e: e.key))
        for e in edges:
            if e.source not in known:
                raise ValidationError(f"unknown edge source {e.source!r}")
            if e.target not in known:
                raise ValidationError(f"unknown edge target {e.target!r}")
            if e.source == e.target:
                raise ValidationError(f"self-loop on {e.source!r}")
            if not isinstance(e.is_async, bool):
                raise ValidationError(f"async flag of {e.source}->{e.target} must be boolean")
        for a, b in zip(edges, edges[1:]):
            if a.key == b.key:
                raise ValidationError(f"duplicate edge {a.source}->{a.target}")
        object.__setattr__(self, "services", services)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @classmethod
    def from_edges(
        cls,
        names: Iterable[str],
        edges: Iterable[tuple[str, str, bool]],
    ) -> "ServiceGraph":
        """Build from service names plus an edge multiset.

        Repeated (source, target) pairs collapse to one edge; if any copy is
        synchronous the merged edge is synchronous.
        """
        merged: dict[tuple[str, str], bool] = {}
        for src, dst, is_async in edges:
            merged[(src, dst)] = merged.get((src, dst), True) and bool(is_async)
        return cls(
            services=tuple(ServiceNode(n) for n in sorted(set(names))),
            edges=tuple(Edge(s, t, a) for (s, t), a in merged.items()),
        )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.services)

    @property
    def async_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.is_async)

    def index(self, name: str) -> int:
        return self._index[name]

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.services)

    @cached_property
    def _masks(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        full = [0] * len(self.services)
        sync = [0] * len(self.services)
        for e in self.edges:
            i, j = self._index[e.source], self._index[e.target]
            full[i] |= 1 << j
            if not e.is_async:
                sync[i] |= 1 << j
        return tuple(full), tuple(sync)

    def successor_masks(self, include_async: bool = True) -> tuple[int, ...]:
        """Per-service bitmask of successors, indexed like :attr:`services`."""
        return self._masks[0] if include_async else self._masks[1]


_SERVICE_KEYS = {"name", "replicas"}
_EDGE_KEYS = {"source", "target", "async"}


def _check_keys(obj: object, allowed: set[str], required: set[str], where: str) -> dict:
    if not isinstance(obj, dict):
        raise ValidationError(f"{where} must be an object")
    extra = set(obj) - allowed
    if extra:
        raise ValidationError(f"unknown keys in {where}: {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise ValidationError(f"missing keys in {where}: {sorted(missing)}")
    return obj


def graph_from_dict(doc: object, allow_replicas: bool = False) -> ServiceGraph:
    doc = _check_keys(doc, {"services", "edges"}, {"services", "edges"}, "graph document")
    if not isinstance(doc["services"], list) or not isinstance(doc["edges"], list):
        raise ValidationError("'services' and 'edges' must be arrays")
    services = []
    for i, raw in enumerate(doc["services"]):
        raw = _check_keys(raw, _SERVICE_KEYS, {"name"}, f"services[{i}]")
        node = ServiceNode(raw["name"], raw.get("replicas", 1))
        if node.replicas > 1 and not allow_replicas:
            # failure semantics for partially failed replicated services is undefined
            raise ValidationError(
                f"service {node.name!r} has replicas={node.replicas}; only replicas=1 is supported"
            )
        services.append(node)
    edges = []
    for i, raw in enumerate(doc["edges"]):
        raw = _check_keys(raw, _EDGE_KEYS, _EDGE_KEYS, f"edges[{i}]")
        if not isinstance(raw["source"], str) or not isinstance(raw["target"], str):
            raise ValidationError(f"edges[{i}] endpoints must be strings")
        if not isinstance(raw["async"], bool):
            raise ValidationError(f"edges[{i}].async must be a boolean")
        edges.append(Edge(raw["source"], raw["target"], raw["async"]))
    return ServiceGraph(tuple(services), tuple(edges))


def graph_to_dict(graph: ServiceGraph) -> dict:
    return {
        "services": [{"name": s.name, "replicas": s.replicas} for s in graph.services],
        "edges": [
            {"source": e.source, "target": e.target, "async": e.is_async} for e in graph.edges
        ],
    }


def load_graph(document: str | bytes) -> ServiceGraph:
    """Parse and validate ``graph.json`` text."""
    if isinstance(document, bytes):
        if document.startswith(b"\xef\xbb\xbf"):
            raise ValidationError("graph document must be UTF-8 without BOM")
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON: {exc}") from exc
    return graph_from_dict(doc)


def save_graph(graph: ServiceGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2, ensure_ascii=False) + "\n"
