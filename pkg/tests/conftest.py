import os

import pytest


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Persistent class-table cache shared by the test session (if configured)."""
    env = os.environ.get("GHZSIM_CACHE_DIR")
    return env if env else None


@pytest.fixture
def verdict(request, capsys):
    """
    Record the outcome of one acceptance criterion.

    ``verdict(number, title, passed, detail)`` prints a ``PASS``/``FAIL`` line
    (kept for the terminal summary) and fails the test when ``passed`` is false.
    """
    def record(number, title, passed, detail=""):
        line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {title}"
        if detail:
            line += f" -- {detail}"
        request.config.acceptance_lines[number] = line
        with capsys.disabled():
            print("\n" + line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines, key=str):
            terminalreporter.write_line(lines[number])
