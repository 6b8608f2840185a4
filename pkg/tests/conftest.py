import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ofdma_ce.channel import make_scenario
from ofdma_ce.model import Scenario, SystemParams, UserParams

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", "40")),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# (criterion number, title, passed, detail) filled in by test_acceptance.py
_ACCEPTANCE: list = []


@pytest.fixture
def acceptance():
    def record(num: int, title: str, passed: bool, detail: str = ""):
        _ACCEPTANCE.append((num, title, bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}: {title} | {detail}")


def small(seed=0, K=2, N=2, **user):
    return make_scenario(seed=seed, num_users=K, system=SystemParams(num_subchannels=N),
                         user=UserParams(**user) if user else None)


@pytest.fixture
def default_scenario() -> Scenario:
    return make_scenario(seed=0)


def rel_gap(a, b):
    return (a - b) / abs(b)


def allclose_rel(a, b, rtol):
    return np.all(np.abs(np.asarray(a) - np.asarray(b)) <= rtol * np.abs(np.asarray(b)))
