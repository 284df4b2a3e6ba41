import numpy as np
import pytest

from satfl.orbital import VisibilityPattern


def brute_force_intervals(times: np.ndarray, visible: np.ndarray) -> list[tuple[float, float]]:
    """Closed intervals of consecutive visible grid samples."""
    out = []
    start = None
    for t, v in zip(times, visible):
        if v and start is None:
            start = t
        if not v and start is not None:
            out.append((start, prev))
            start = None
        prev = t
    if start is not None:
        out.append((start, prev))
    return out


def random_pattern(rng: np.random.Generator, horizon: float = 20_000.0, max_intervals: int = 6, subject="cluster") -> VisibilityPattern:
    """Integer-valued random pattern; every interval spans at least 2 s."""
    n = int(rng.integers(1, max_intervals + 1))
    cuts = np.sort(rng.choice(np.arange(1, int(horizon)), size=2 * n, replace=False)).astype(float)
    pairs = [(cuts[2 * i], cuts[2 * i + 1]) for i in range(n) if cuts[2 * i + 1] - cuts[2 * i] >= 2]
    if not pairs:
        pairs = [(1.0, 3.0)]
    return VisibilityPattern.from_pairs(pairs, horizon, subject)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion at the end of the run
# ---------------------------------------------------------------------------

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    number = dict(report.user_properties).get("acceptance")
    if number is None:
        return
    entry = _ACCEPTANCE.setdefault(number, {"ok": True, "detail": "", "title": dict(report.user_properties)["title"]})
    if report.when == "call" or report.failed:
        entry["ok"] = entry["ok"] and report.passed
        entry["detail"] = dict(report.user_properties).get("detail", entry["detail"])


@pytest.fixture(autouse=True)
def _acceptance_tag(request, record_property):
    mark = request.node.get_closest_marker("acceptance")
    if mark is not None:
        record_property("acceptance", mark.args[0])
        record_property("title", mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        line = f"criterion {n}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if e["detail"]:
            line += f"  ({e['detail']})"
        terminalreporter.write_line(line)
