import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from intentroute.mapenv import CostZone, generate_grid_map  # noqa: E402
from intentroute.poicatalog import generate_pois  # noqa: E402


@pytest.fixture(scope="session")
def grid50():
    return generate_grid_map(seed=0)


@pytest.fixture(scope="session")
def pois50(grid50):
    return generate_pois(grid50, seed=0)


def corridor_map():
    """10x6 grid: rows 0-3 carry high scenic cost, rows 4-5 form a low-cost
    corridor off the straight (0,2)-(9,2) line."""
    zone = CostZone("scenic", ((0, 0), (9, 0), (9, 3.6), (0, 3.6)), "high")
    return generate_grid_map(10, 6, seed=1, zones=[zone], block_fraction=0.0)


@pytest.fixture(scope="session")
def corridor():
    return corridor_map()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
