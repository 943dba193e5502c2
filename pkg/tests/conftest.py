import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semiperm.geometry import Barrier, ClosedCurve, Environment

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def disk_env(R=2.0, r=1.0, lam=1.0, resolution=1024):
    outer = ClosedCurve.circle((0, 0), R, resolution)
    if r is None:
        return Environment(outer)
    return Environment(outer, (Barrier(ClosedCurve.circle((0, 0), r, resolution), lam, lam),))


@pytest.fixture
def disk():
    return disk_env()


@pytest.fixture
def unit_disk():
    return disk_env(1.0, None)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
