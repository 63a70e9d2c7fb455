from __future__ import annotations

import os
import sys
from collections import defaultdict
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DEMO = Path(__file__).resolve().parents[1] / "src" / "lifelong_harness" / "demo"

_outcomes: dict[int, list[bool]] = defaultdict(list)
_titles: dict[int, str] = {}


@pytest.fixture
def demo_dir() -> Path:
    return DEMO


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number = getattr(report, "acceptance_number", None)
        if number is not None:
            _outcomes[number].append(report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        number, title = marker.args
        _titles[number] = title
        report.acceptance_number = number


def pytest_terminal_summary(terminalreporter):
    if not _titles:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_titles):
        results = _outcomes.get(number, [])
        verdict = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"C{number:<2} {verdict}  {_titles[number]}  ({sum(results)}/{len(results)} checks)")
