import numpy as np
import pytest
from hypothesis import settings

from dtwisland.ingest import bundled_case_path, load_network_case
from dtwisland.swingsim import load_scenario, simulate

settings.register_profile("ci", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("ci")

CASE1_GROUPS = (("G1", "G8", "G9"), ("G2", "G3", "G4", "G5", "G6", "G7"))
CASE2_GROUPS = (("G1", "G2", "G3", "G8", "G9"), ("G4", "G5", "G6", "G7"))

# bus allocation of the two reference islanding solutions
CASE1_ISLAND_A = {2, 3, 17, 18, 25, 26, 27, 28, 29, 30, 37, 38}
CASE2_ISLAND_B = {15, 16, 19, 20, 21, 22, 23, 24, 33, 34, 35, 36}


@pytest.fixture(scope="session")
def case39():
    return load_network_case(bundled_case_path())


@pytest.fixture(scope="session")
def scenario1():
    return load_scenario(bundled_case_path("case1.json"))


@pytest.fixture(scope="session")
def scenario2():
    return load_scenario(bundled_case_path("case2.json"))


@pytest.fixture(scope="session")
def sim1(case39, scenario1):
    return simulate(case39, scenario1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# --- acceptance report -------------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, ok, detail)``; the line is printed now and again in the summary."""

    def record(n: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[n] = (ok, detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
