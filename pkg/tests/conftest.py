import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sivsim import defaults
from sivsim.model import FieldConfig, SivParams

settings.register_profile("sivsim", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sivsim")


@pytest.fixture
def optical():
    return SivParams.preset("optical")


@pytest.fixture
def mw():
    return SivParams.preset("mw")


@pytest.fixture
def aligned_field():
    return FieldConfig(2700.0, defaults.ALIGNED_ALPHA)


@pytest.fixture
def mw_field():
    return FieldConfig(1600.0, defaults.ALIGNED_ALPHA)


def ptp_rel(a, b):
    return abs(a - b) / abs(b)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
