import time
from dataclasses import dataclass, field

import pytest

from uav_csee import default_scenario
from uav_csee.ao import AoConfig, AoTrace, ao_solve
from uav_csee.scenario import Solution

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@dataclass
class AoRun:
    solution: Solution
    trace: AoTrace
    wall_time: float
    blocks: list = field(default_factory=list)


_RUNS: dict = {}


def run_ao(scn, mode: str = "prop", max_iterations: int = 30) -> AoRun:
    """AO run with every raw block result captured; cached per (scenario, mode, cap)."""
    key = (scn, mode, max_iterations)
    if key not in _RUNS:
        blocks = []
        t0 = time.perf_counter()
        sol, trace = ao_solve(scn, AoConfig(max_iterations=max_iterations, mode=mode),
                              observer=lambda name, res: blocks.append((name, res)))
        _RUNS[key] = AoRun(sol, trace, time.perf_counter() - t0, blocks)
    return _RUNS[key]


@pytest.fixture(scope="session")
def reference():
    return default_scenario()


@pytest.fixture(scope="session")
def desk(reference):
    """Desk-scale version of the reference scenario (20 slots per phase)."""
    return reference.replace(n1=20, n2=20)


@pytest.fixture(scope="session")
def small(reference):
    return reference.replace(n1=6, n2=6)


@pytest.fixture(scope="session")
def warden_on_path(reference):
    """Reference geometry with the warden estimate on the straight path, as some worked examples assume."""
    return reference.replace(q_warden_est=(350.0, 350.0))
