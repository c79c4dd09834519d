import os
from pathlib import Path

import pytest

from availsim.core import EndpointSpec, load_targets
from availsim.graph import ServiceGraph, load_graph
from availsim.simulation import parse_service_list

DEMO = Path(__file__).resolve().parents[1] / "src" / "availsim" / "data" / "demo"
GOLDEN = Path(__file__).resolve().parent / "golden"

_acceptance_lines: list[str] = []


def pytest_collection_modifyitems(config, items):
    if os.environ.get("AVAILSIM_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow; set AVAILSIM_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance():
    def record(criterion: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f" -- {detail}" if detail else "")
        _acceptance_lines.append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture
def g0() -> ServiceGraph:
    """F -> A, F -> B synchronous; A -> Kf -> C asynchronous."""
    return ServiceGraph.from_edges(
        ["F", "A", "B", "Kf", "C"],
        [("F", "A", False), ("F", "B", False), ("A", "Kf", True), ("Kf", "C", True)],
    )


@pytest.fixture
def g0_eligible() -> tuple[str, ...]:
    return ("A", "B", "C", "Kf")


@pytest.fixture(scope="session")
def demo_graph() -> ServiceGraph:
    return load_graph((DEMO / "truth.json").read_bytes())


@pytest.fixture(scope="session")
def demo_endpoints() -> list[EndpointSpec]:
    return load_targets((DEMO / "targets.json").read_text())


@pytest.fixture(scope="session")
def demo_disallow() -> frozenset[str]:
    return parse_service_list((DEMO / "disallowlist.txt").read_text())
