import pytest
from hypothesis import HealthCheck, settings

from periodic_pml.config import canonical_config, power_decay_config

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def canonical():
    return canonical_config()


@pytest.fixture(scope="session")
def power():
    return power_decay_config()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
