"""Jaeger trace exports -> service dependency graph."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from availsim.errors import ValidationError
from availsim.graph import ServiceGraph

SPAN_KINDS = ("internal", "server", "client", "producer", "consumer", "unspecified")


@dataclass(frozen=True)
class SpanRecord:
    trace_id: str
    span_id: str
    parent_span_id: str | None
    service_name: str
    kind: str = "unspecified"
    attributes: Mapping[str, object] = field(default_factory=dict)
    duration_micros: int = 0

    @property
    def messaging_system(self) -> str | None:
        value = self.attributes.get("messaging.system")
        return None if value is None else str(value)


@dataclass(frozen=True)
class IngestConfig:
    infra_services: frozenset[str] = frozenset()
    min_span_duration_micros: int = 0
    broker_systems: frozenset[str] = frozenset({"kafka"})

    def __post_init__(self) -> None:
        object.__setattr__(self, "infra_services", frozenset(self.infra_services))
        object.__setattr__(self, "broker_systems", frozenset(self.broker_systems))
        if self.min_span_duration_micros < 0:
            raise ValidationError("min_span_duration_micros must be >= 0")


def _span_kind(tags: dict) -> str:
    kind = tags.get("span.kind")
    if kind is None:
        return "unspecified"
    kind = str(kind).lower()
    return kind if kind in SPAN_KINDS else "unspecified"


def parse_trace_export(document: str | bytes) -> list[SpanRecord]:
    """One :class:`SpanRecord` per span in a Jaeger HTTP-API style export.

    Only ``CHILD_OF`` references set the parent. A parent id that does not
    resolve inside its trace is dropped, so the span becomes a root.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("data"), list):
        raise ValidationError("trace export must be an object with a 'data' array")

    records: list[SpanRecord] = []
    for trace in doc["data"]:
        if not isinstance(trace, dict):
            raise ValidationError("trace entries must be objects")
        trace_id = str(trace.get("traceID", ""))
        processes = trace.get("processes") or {}
        spans = trace.get("spans") or []
        ids = set()
        for span in spans:
            if not isinstance(span, dict) or "spanID" not in span:
                raise ValidationError(f"span without spanID in trace {trace_id!r}")
            sid = str(span["spanID"])
            if sid in ids:
                raise ValidationError(f"duplicate span_id {sid!r} in trace {trace_id!r}")
            ids.add(sid)
        for span in spans:
            sid = str(span["spanID"])
            pid = span.get("processID")
            proc = processes.get(pid)
            if not isinstance(proc, dict) or "serviceName" not in proc:
                raise ValidationError(
                    f"span {sid!r} in trace {trace_id!r} references missing process {pid!r}"
                )
            parent = None
            for ref in span.get("references") or []:
                if ref.get("refType") == "CHILD_OF":
                    parent = str(ref.get("spanID"))
                    break
            if parent is not None and parent not in ids:
                parent = None
            tags = {t["key"]: t.get("value") for t in span.get("tags") or []}
            duration = int(span.get("duration", 0))
            if duration < 0:
                raise ValidationError(f"span {sid!r} has negative duration")
            records.append(SpanRecord(
                trace_id=trace_id,
                span_id=sid,
                parent_span_id=parent,
                service_name=str(proc["serviceName"]),
                kind=_span_kind(tags),
                attributes=tags,
                duration_micros=duration,
            ))
    return records


def build_dependency_graph(spans: Iterable[SpanRecord], config: IngestConfig) -> ServiceGraph:
    """Project span trees onto service-level edges.

    Cross-service parent/child pairs give synchronous edges. Producer and
    consumer spans of a broker system are routed through a node named after
    the system (``svc -> kafka``, ``kafka -> svc``) as async edges, and the
    direct parent link into such a consumer span is not projected.
    """
    spans = list(spans)
    by_id = {(s.trace_id, s.span_id): s for s in spans}

    def kept(s: SpanRecord) -> bool:
        if s.service_name in config.infra_services:
            return False
        if s.kind == "internal" and s.duration_micros < config.min_span_duration_micros:
            return False
        return True

    def broker_of(s: SpanRecord) -> str | None:
        system = s.messaging_system
        if system in config.broker_systems and s.kind in ("producer", "consumer"):
            return system
        return None

    names: set[str] = set()
    edges: list[tuple[str, str, bool]] = []
    for s in spans:
        if not kept(s):
            continue
        names.add(s.service_name)
        broker = broker_of(s)
        if broker is not None:
            names.add(broker)
            if s.kind == "producer":
                edges.append((s.service_name, broker, True))
            else:
                edges.append((broker, s.service_name, True))
                continue
        if s.parent_span_id is None:
            continue
        parent = by_id.get((s.trace_id, s.parent_span_id))
        if parent is None or not kept(parent) or parent.service_name == s.service_name:
            continue
        edges.append((parent.service_name, s.service_name, False))
    return ServiceGraph.from_edges(names, edges)


def sanity_check(graph: ServiceGraph, deployed: Iterable[str]) -> list[str]:
    deployed = set(deployed)
    warnings = [
        f"service {name!r} is not deployed" for name in graph.names if name not in deployed
    ]
    touched = {e.source for e in graph.edges} | {e.target for e in graph.edges}
    warnings += [f"isolated service {name!r}" for name in graph.names if name not in touched]
    return warnings


def trace_files(paths: Iterable[str | Path]) -> list[Path]:
    """Expand directories to their ``*.json`` files, sorted for a stable merge."""
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.json")))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(str(p))
    return files


def discover(paths: Iterable[str | Path], config: IngestConfig) -> ServiceGraph:
    spans: list[SpanRecord] = []
    for f in trace_files(paths):
        spans.extend(parse_trace_export(f.read_bytes()))
    return build_dependency_graph(spans, config)
