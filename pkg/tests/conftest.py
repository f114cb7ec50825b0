import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from skdv import SpectralGrid

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_grid():
    return SpectralGrid(8 * math.pi, 128)


@pytest.fixture(scope="session")
def grid():
    return SpectralGrid()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_smooth(grid, rng, complex_=True, bandwidth=None, amplitude=1.0):
    """Random band-limited field (modes with |xi| <= bandwidth)."""
    bw = bandwidth if bandwidth is not None else grid.nyquist / 4
    spec = rng.normal(size=grid.num_points) + (1j * rng.normal(size=grid.num_points) if complex_ else 0)
    spec = spec * (np.abs(grid.xi) <= bw)
    f = np.fft.ifft(spec) * grid.num_points / 8
    f = f if complex_ else f.real.copy()
    scale = np.max(np.abs(f))
    return amplitude * f / scale if scale > 0 else f


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
