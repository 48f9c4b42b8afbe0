import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> list of (check name, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def record():
    def _record(criterion: int, name: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE.setdefault(criterion, []).append((name, bool(ok), detail))
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        failing = [name for name, ok, _ in checks if not ok]
        tail = f" (failing: {', '.join(failing)})" if failing else ""
        tr.write_line(f"criterion {k:2d}: {verdict}{tail}")
        for name, ok, detail in checks:
            tr.write_line(f"    [{'ok' if ok else 'FAIL'}] {name}: {detail}")
