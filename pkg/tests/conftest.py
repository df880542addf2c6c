from dataclasses import replace

import pytest
from hypothesis import settings

from etdcapture.cr3bp import SystemParams
from etdcapture.search import CaptureSearch, SearchParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return SystemParams.earth_moon()


@pytest.fixture(scope="session")
def mini_search(params):
    """Coarse search (h = 0.01 LU, two z-steps of 0.04 LU) shared by several modules."""
    sp = replace(SearchParams.desk_scale(params), h=0.01, d_O=0.02, dz=0.04, max_sections=2)
    return CaptureSearch(params, sp)


@pytest.fixture(scope="session")
def mini_slices(mini_search):
    planar = mini_search.search_planar([0.5])
    return planar + mini_search.search_z_sections(planar)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
