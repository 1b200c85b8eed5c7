import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from restcarver.fixture import FixtureServer  # noqa: E402
from restcarver.executor import send_request  # noqa: E402


@pytest.fixture(scope="session")
def fixture_server():
    server = FixtureServer().start()
    yield server
    server.stop()


@pytest.fixture()
def fixture_url(fixture_server):
    """Base URL of a freshly reset fixture server."""
    send_request("POST", fixture_server.base_url + "/__reset")
    return fixture_server.base_url


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one pass/fail line per acceptance criterion after the run."""
    reports = []
    for outcome in ("passed", "failed", "error"):
        reports.extend(terminalreporter.stats.get(outcome, []))
    lines = {}
    for report in reports:
        if getattr(report, "when", "call") != "call":
            continue
        name = getattr(report, "nodeid", "")
        if "test_acceptance.py" in name:
            short = name.split("::")[-1]
            lines[short] = "PASS" if report.passed else "FAIL"
    if lines:
        terminalreporter.section("acceptance criteria")
        for name in sorted(lines):
            terminalreporter.write_line(f"{lines[name]}  {name}")
