import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from prager_synge import gas_analytic as ga  # noqa: E402
from prager_synge.grid_field import make_grid  # noqa: E402


@pytest.fixture(scope="session")
def gas():
    return ga.GasModel()


@pytest.fixture(scope="session")
def edney1(gas):
    return ga.build_edney1(ga.freestream_state(4.0, gas), math.radians(20), math.radians(15), gas=gas)


@pytest.fixture(scope="session")
def edney6(gas):
    return ga.build_edney6(ga.freestream_state(3.5, gas), math.radians(15), math.radians(25), gas=gas)


@pytest.fixture(scope="session")
def grid24():
    return make_grid(24, 24)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record a criterion outcome: call with (number, passed, detail)."""
    results = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number, passed, detail=""):
        results[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
