import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criterion -> list of (check, passed, detail), filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number: int, check: str, passed: bool, detail: str = ""):
        ACCEPTANCE.setdefault(number, []).append((check, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[number]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        detail = "; ".join(f"{name}{'' if ok else ' [failed]'}: {d}" if d else f"{name}{'' if ok else ' [failed]'}" for name, ok, d in checks)
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
