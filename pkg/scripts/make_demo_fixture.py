#!/usr/bin/env python3
"""Regenerate the bundled demo workspace under src/availsim/data/demo/.

The workspace mimics the OpenTelemetry Astronomy Shop: a 16-service ground
truth graph with three Kafka edges, Jaeger-style trace exports that exercise
infrastructure filtering, orphan spans and broker tagging, the four probed
routes, and a pipeline config. Output is byte-stable.
"""

import argparse
import json
from pathlib import Path

from availsim.core import EndpointSpec, save_targets
from availsim.graph import ServiceGraph, save_graph

SYNC = [
    ("frontend", "ad"), ("frontend", "cart"), ("frontend", "checkout"),
    ("frontend", "currency"), ("frontend", "product-catalog"),
    ("frontend", "recommendation"), ("frontend", "shipping"),
    ("ad", "flagd"), ("cart", "valkey-cart"), ("cart", "flagd"),
    ("checkout", "cart"), ("checkout", "currency"), ("checkout", "email"),
    ("checkout", "payment"), ("checkout", "product-catalog"), ("checkout", "shipping"),
    ("payment", "flagd"), ("recommendation", "product-catalog"),
    ("recommendation", "flagd"), ("shipping", "quote"),
]
ASYNC = [("checkout", "kafka"), ("kafka", "accounting"), ("kafka", "fraud-detection")]

ROUTES = [
    EndpointSpec("GET /api/products", "frontend", ("product-catalog",)),
    EndpointSpec("GET /api/recommendations", "frontend", ("recommendation",)),
    EndpointSpec("GET /api/cart", "frontend", ("cart",)),
    EndpointSpec("POST /api/checkout", "frontend", ("checkout", "cart", "payment", "shipping")),
]

INFRA = ["frontend-proxy", "jaeger", "load-generator", "otel-collector"]

PIPELINE = {
    "ingest": {"infra_file": "infra.txt", "deployed_file": "deployed.txt",
               "min_span_duration_micros": 0,
               "broker_systems": ["kafka"]},
    "simulation": {"failure_fractions": [0.1, 0.3, 0.5, 0.7, 0.9], "trials": 20000,
                   "master_seed": 42, "common_random_numbers": True, "rounding": "half_up"},
    "oracle": {"budget": 10000000},
    "chaos": {"chunks": 10, "windows_per_chunk": 20, "probes_per_window": 100,
              "master_seed": 7, "retry_rescue_prob": 0.0, "gray_failure_prob": 0.0},
}


def truth_graph() -> ServiceGraph:
    names = {s for e in SYNC + ASYNC for s in e}
    return ServiceGraph.from_edges(
        names, [(a, b, False) for a, b in SYNC] + [(a, b, True) for a, b in ASYNC]
    )


class TraceBuilder:
    """Emits Jaeger-export traces with deterministic ids and durations."""

    def __init__(self) -> None:
        self.counter = 0
        self.traces: list[dict] = []

    def _id(self, width: int = 16) -> str:
        self.counter += 1
        return format(self.counter * 2654435761 % (1 << 64), f"0{width}x")

    def trace(self, root) -> None:
        trace_id = self._id(32)
        spans: list[dict] = []
        processes: dict[str, dict] = {}

        def pid(service: str) -> str:
            for key, proc in processes.items():
                if proc["serviceName"] == service:
                    return key
            key = f"p{len(processes) + 1}"
            processes[key] = {"serviceName": service}
            return key

        def emit(node, parent_id, ref_type="CHILD_OF"):
            service, kind, children, *extra = node
            tags = [{"key": "span.kind", "value": kind}] if kind else []
            tags += [{"key": k, "value": v} for k, v in (extra[0] if extra else {}).items()]
            span_id = self._id()
            refs = [] if parent_id is None else [
                {"refType": ref_type, "traceID": trace_id, "spanID": parent_id}
            ]
            spans.append({
                "traceID": trace_id,
                "spanID": span_id,
                "operationName": f"{service}/{kind or 'span'}",
                "references": refs,
                "startTime": 1700000000000000 + self.counter,
                "duration": 40 + (self.counter * 37) % 9000,
                "tags": tags,
                "processID": pid(service),
            })
            for child in children:
                if child[0] == "FOLLOWS_FROM":
                    emit(child[1], span_id, "FOLLOWS_FROM")
                elif child[0] == "ORPHAN":
                    emit(child[1], self._id())
                else:
                    emit(child, span_id)

        emit(root, None)
        self.traces.append({"traceID": trace_id, "spans": spans, "processes": processes})


def call(caller: str, callee: str, *downstream, rpc: bool = True):
    """Client span in ``caller`` wrapping a server span in ``callee``."""
    system = {"rpc.system": "grpc"} if rpc else {"http.method": "GET"}
    return (caller, "client", [(callee, "server", list(downstream), system)], system)


def internal(service: str, *children):
    return (service, "internal", list(children))


def via_proxy(*frontend_children):
    """load-generator -> frontend-proxy -> frontend, infra hops filtered at ingest."""
    frontend = ("frontend", "server", [internal("frontend")] + list(frontend_children))
    return ("load-generator", "client", [
        ("frontend-proxy", "server", [("frontend-proxy", "client", [frontend])]),
    ])


def kafka_producer():
    return ("checkout", "producer", [
        ("accounting", "consumer", [internal("accounting")], {"messaging.system": "kafka"}),
        ("FOLLOWS_FROM", ("fraud-detection", "consumer", [internal("fraud-detection")],
                          {"messaging.system": "kafka"})),
    ], {"messaging.system": "kafka", "messaging.destination.name": "orders"})


def product_flow():
    return via_proxy(
        call("frontend", "product-catalog", internal("product-catalog")),
        call("frontend", "currency"),
    )


def recommendation_flow():
    return via_proxy(
        call("frontend", "recommendation",
             call("recommendation", "flagd"),
             call("recommendation", "product-catalog")),
        call("frontend", "ad", call("ad", "flagd")),
    )


def cart_flow():
    return via_proxy(
        call("frontend", "cart",
             call("cart", "valkey-cart", rpc=False),
             call("cart", "flagd")),
        call("frontend", "shipping", call("shipping", "quote", rpc=False), rpc=False),
    )


def checkout_flow():
    return via_proxy(call(
        "frontend", "checkout",
        call("checkout", "cart", call("cart", "valkey-cart", rpc=False)),
        call("checkout", "product-catalog"),
        call("checkout", "currency"),
        call("checkout", "shipping", call("shipping", "quote", rpc=False), rpc=False),
        call("checkout", "payment", call("payment", "flagd")),
        call("checkout", "email", rpc=False),
        kafka_producer(),
    ))


def orphan_flow():
    """A partial trace whose email span lost its parent."""
    return ("email", "server", [("ORPHAN", ("email", "internal", []))])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1]
                                          / "src" / "availsim" / "data" / "demo"))
    args = ap.parse_args()
    out = Path(args.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)

    builder = TraceBuilder()
    batches = {
        "browse": [product_flow, recommendation_flow, cart_flow] * 3,
        "checkout": [checkout_flow, checkout_flow, orphan_flow],
    }
    for name, flows in batches.items():
        builder.traces = []
        for make in flows:
            builder.trace(make())
        write_json(out / "traces" / f"{name}.json", {"data": builder.traces})

    (out / "truth.json").write_text(save_graph(truth_graph()), encoding="utf-8")
    (out / "targets.json").write_text(save_targets(ROUTES), encoding="utf-8")
    (out / "disallowlist.txt").write_text(
        "# services never killed by the chaos harness\nfrontend\n", encoding="utf-8"
    )
    (out / "infra.txt").write_text(
        "# telemetry backends and load generation\n" + "\n".join(INFRA) + "\n", encoding="utf-8"
    )
    deployed = sorted(set(truth_graph().names) | set(INFRA))
    (out / "deployed.txt").write_text("\n".join(deployed) + "\n", encoding="utf-8")
    write_json(out / "pipeline.json", PIPELINE)


if __name__ == "__main__":
    main()
