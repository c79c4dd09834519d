"""Trace-discovered service graphs and endpoint availability under fail-stop failures."""

__version__ = "0.1.0"

from availsim.errors import BudgetExceededError, ValidationError
from availsim.graph import Edge, ServiceGraph, ServiceNode, load_graph, save_graph
from availsim.core import (
    EndpointSpec,
    FailureScenario,
    Semantics,
    alive_graph,
    endpoint_success,
    load_targets,
    reachable_from,
)

__all__ = [
    "BudgetExceededError",
    "Edge",
    "EndpointSpec",
    "FailureScenario",
    "Semantics",
    "ServiceGraph",
    "ServiceNode",
    "ValidationError",
    "alive_graph",
    "endpoint_success",
    "load_graph",
    "load_targets",
    "reachable_from",
    "save_graph",
]
