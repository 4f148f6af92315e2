import numpy as np
import pytest

from maskflow.core import Mask


def mask_from_pixels(height, width, pixels):
    grid = np.zeros((height, width), dtype=bool)
    for x, y in pixels:
        grid[y, x] = True
    return Mask.from_array(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
