import numpy as np
import pytest

FD_STEP = 1e-5


def central_diff(fn, x, step=FD_STEP):
    """Central finite difference of a scalar function at scalar ``x``."""
    return (fn(x + step) - fn(x - step)) / (2.0 * step)


def rel_err(a, b, floor=1e-7):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance bookkeeping: tests marked ``criterion(n, title)`` roll up into
# one PASS/FAIL line per criterion at the end of the session.  Setup time
# (shared fixtures) counts toward the criterion that first pays for it.
_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, budget=None): acceptance criterion, optional time budget in seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.skipped:
        return
    number, title = mark.args
    entry = _criteria.setdefault(
        number, {"title": title, "ok": True, "seconds": 0.0, "budget": mark.kwargs.get("budget"), "failed": []}
    )
    entry["seconds"] += report.duration
    if not report.passed:
        entry["ok"] = False
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        over = e["budget"] is not None and e["seconds"] >= e["budget"]
        status = "PASS" if e["ok"] and not over else "FAIL"
        extra = f"  failed: {', '.join(e['failed'])}" if e["failed"] else ""
        if over:
            extra += f"  over the {e['budget']}s budget"
        terminalreporter.write_line(f"[{status}] {number:>2}. {e['title']} ({e['seconds']:.2f}s){extra}")
