import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture(scope="session")
def criterion_log(pytestconfig):
    """Record (label, passed, detail) per acceptance criterion for the summary."""
    return pytestconfig.stash[_CRITERIA]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_CRITERIA, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(log):
        label, passed, detail = log[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {key}: {label} ({detail})")
