"""Shared fixtures and the acceptance summary hook.

Acceptance tests record one PASS/FAIL line each through the
``acceptance_log`` fixture; the lines are replayed in a terminal section
after the run so the checklist is visible without -s.
"""

import numpy as np
import pytest

from maxslope import load_scenario
from maxslope.quadrature import QuadratureSpec

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log():
    """Callable(name, ok, detail) that records and asserts one criterion."""

    def _record(name: str, ok: bool, detail: str = ""):
        tail = f"  [{detail}]" if detail else ""
        line = f"{'PASS' if ok else 'FAIL'}  {name}{tail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _record


# scenario fixtures: fresh objects per test, nothing mutated in place

@pytest.fixture
def hinge_banach():
    return load_scenario("hinge")


@pytest.fixture
def kinked_rate():
    return load_scenario("kinked_rate")


@pytest.fixture
def quadratic_flow():
    return load_scenario("quadratic")


@pytest.fixture
def hinge_metric():
    return load_scenario("hinge_metric")


@pytest.fixture
def truncated():
    return load_scenario("truncated")


@pytest.fixture
def two_well():
    return load_scenario("two_well")


@pytest.fixture
def fast_spec():
    """Coarser quadrature for unit tests that only need plumbing, not tight bars."""
    return QuadratureSpec(uniform=64, per_octave=4)


@pytest.fixture
def rng():
    return np.random.default_rng(20250831)
