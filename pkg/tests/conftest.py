import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

from conetomo import ScanGeometry


@pytest.fixture
def small_geom():
    return ScanGeometry(a=0.01, b=2.83, c=2.0, image_extent=(-1, 1, 0, 2), nx=16, ny=16, nE=16, nx0=32)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
