import os
import re

from hypothesis import HealthCheck, settings

# fixed example generation so every run checks the same cases
settings.register_profile(
    "repro",
    derandomize=True,
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))


# --- per-criterion summary for tests/test_acceptance.py ------------------------

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_([0-9]+[a-z]?)_")
_verdicts: dict = {}


def _order(key):
    m = re.match(r"(\d+)([a-z]?)", key)
    return int(m.group(1)), m.group(2)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    key = m.group(1)
    _verdicts[key] = _verdicts.get(key, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_verdicts, key=_order):
        terminalreporter.write_line(f"criterion {key}: {'PASS' if _verdicts[key] else 'FAIL'}")
