import math
import sys

import pytest

from sloshing.assembly import assemble
from sloshing.geometry import ContainerSpec, build_mesh


@pytest.fixture(scope="session")
def disk_pair():
    return build_mesh(ContainerSpec.disk(1.0, 1.0, 3))


@pytest.fixture(scope="session")
def rect_pair():
    return build_mesh(ContainerSpec.rectangle(2.0, 1.0, 0.7, 4))


@pytest.fixture
def disk_ops(disk_pair):
    # fresh OperatorSet per test so factorisation caches do not leak between tests
    return assemble(disk_pair, 10.0)


@pytest.fixture
def disk_ops_inf(disk_pair):
    return assemble(disk_pair, math.inf)


@pytest.fixture
def rect_ops(rect_pair):
    return assemble(rect_pair, 10.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
