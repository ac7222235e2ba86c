import contextlib
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hamqa import tensor as tn

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def f64():
    with tn.precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class _Outcome:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion(request):
    """Context manager that records one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    @contextlib.contextmanager
    def record(number: int, title: str):
        outcome = _Outcome()
        started = time.perf_counter()
        try:
            yield outcome
        except BaseException as exc:
            reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            line = f"[FAIL] criterion {number}: {title} ({reason})"
            print(line, flush=True)
            lines.append((number, line))
            raise
        line = f"[PASS] criterion {number}: {title} ({outcome.detail}; {time.perf_counter() - started:.1f}s)"
        print(line, flush=True)
        lines.append((number, line))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
