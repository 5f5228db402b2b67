import sys

import pytest

from chargeamp.models import AmplifierConfig, SensorModel, load_registry


@pytest.fixture(scope="session")
def registry():
    return load_registry()


@pytest.fixture
def cfg():
    return AmplifierConfig()


@pytest.fixture
def table_sensor():
    return SensorModel()


@pytest.fixture
def unloaded():
    return SensorModel.unloaded()


@pytest.fixture
def oa1(registry):
    return registry["LTC6240"]


@pytest.fixture
def oa2(registry):
    return registry["AD8617"]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.line(n))
