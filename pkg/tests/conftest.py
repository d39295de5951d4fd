import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from superpose.tensor import RngStream

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return RngStream(20240601)


@pytest.fixture
def gen():
    return np.random.default_rng(7)


# -- acceptance report: one line per criterion in the terminal summary ------

_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance(request):
    """Record a criterion verdict; the summary prints it even when the test fails."""
    def record(label: str, ok: bool, detail: str):
        _ACCEPTANCE[label] = (bool(ok), detail)
        print(f"{label} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda k: int(k.split("-")[1])):
        ok, detail = _ACCEPTANCE[label]
        terminalreporter.write_line(f"{label} {'PASS' if ok else 'FAIL'}: {detail}")
