import numpy as np
import pytest

from vectornet.core_model import ModelParams
from vectornet.geo_ingest import IslandConfig, synthesize_island
from vectornet.mobility import MobilityGenConfig, generate_mobility


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def island100():
    return synthesize_island(IslandConfig(node_count=100, width_m=3000, height_m=3000,
                                          population_total=5000, seed=11))


@pytest.fixture(scope="session")
def mobility100(island100):
    return generate_mobility(island100.xy, MobilityGenConfig(destinations=10, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance reporting: tests marked `criterion(number, title)` get one
# PASS/FAIL line each in the terminal summary, with any details recorded
# through `record_property("detail", ...)`.
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = (rep.passed, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, title, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
