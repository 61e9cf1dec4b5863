"""Shared fixtures: the test corpus, a mock chain node serving library code, and
the acceptance summary printed at the end of the run."""

from __future__ import annotations

import time

import pytest

from annoscan.annotations import compile_sources
from annoscan.cli import AnalysisConfig, run
from annoscan.solver import Solver
from tests.support.acceptance import RESULTS
from tests.support.corpus import COUNTER_LIB, CORPUS, OWNER_LIB, mistake_files
from tests.support.mock_node import MockNode, NodeState


@pytest.fixture(scope="session")
def library_code() -> dict[int, bytes]:
    libs = {p.name: p.read_text() for p in (CORPUS / "libs").glob("*.sol")}
    out = compile_sources(libs)
    return {
        COUNTER_LIB: out.contract("counter_lib.sol", "CounterLib").bin_runtime,
        OWNER_LIB: out.contract("owner_lib.sol", "OwnerLib").bin_runtime,
    }


@pytest.fixture(scope="session")
def node(library_code):
    with MockNode(NodeState(code=dict(library_code))) as n:
        yield n


@pytest.fixture(scope="session")
def corpus_run(node):
    """The whole mistake corpus analyzed once at the default depth, with its wall time."""
    files = [str(f) for f in mistake_files()]
    t0 = time.perf_counter()
    report = run(AnalysisConfig(inputs=files, rpc_url=node.url))
    return report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def solver() -> Solver:
    return Solver()


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        title, ok, detail = RESULTS[n]
        line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
