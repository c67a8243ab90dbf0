import numpy as np
import pytest
import torch

from posevid.pose_core import BODY15, PoseSkeleton

torch.set_num_threads(1)


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", help="skip training-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skip-slow"):
        skip = pytest.mark.skip(reason="--skip-slow")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip)


def standing_pose(canvas=(64, 64)) -> PoseSkeleton:
    h, w = canvas
    cx = w / 2
    u = h / 64
    pts = [
        (cx, 8 * u), (cx, 16 * u),
        (cx - 6 * u, 17 * u), (cx - 9 * u, 26 * u), (cx - 10 * u, 34 * u),
        (cx + 6 * u, 17 * u), (cx + 9 * u, 26 * u), (cx + 10 * u, 34 * u),
        (cx, 34 * u),
        (cx - 4 * u, 35 * u), (cx - 5 * u, 46 * u), (cx - 5 * u, 57 * u),
        (cx + 4 * u, 35 * u), (cx + 5 * u, 46 * u), (cx + 5 * u, 57 * u),
    ]
    return PoseSkeleton(np.array([(x, y, 1.0) for x, y in pts]), canvas=canvas)


@pytest.fixture
def pose():
    return standing_pose()


@pytest.fixture
def topology():
    return BODY15


_ACCEPTANCE: list[str] = []


def record_acceptance(line: str):
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
