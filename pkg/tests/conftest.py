"""Shared fixtures and the acceptance-criteria summary printed after every run."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from ramie.fixtures import write_fixtures
from ramie.pipeline import load_config

_CRITERIA: dict[str, list[str]] = {}
_DETAILS: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): test backs the named acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA.setdefault(marker, []).append(report.outcome)
        _DETAILS.setdefault(marker, []).extend(getattr(report, "criterion_details", []))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = mark.args[0]
        report.criterion_details = list(getattr(item, "criterion_details", []))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _CRITERIA.items():
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
        for line in _DETAILS.get(name, []):
            terminalreporter.write_line(f"      {line}")


@pytest.fixture
def note(request):
    """Attach a measurement line to the acceptance summary for this test."""
    request.node.criterion_details = []
    return request.node.criterion_details.append


@pytest.fixture(scope="session")
def fixture_config(tmp_path_factory) -> Path:
    return write_fixtures(tmp_path_factory.mktemp("fixtures"), seed=7)


@pytest.fixture(scope="session")
def fixture_pipeline_config(fixture_config):
    return load_config(fixture_config)


@pytest.fixture(scope="session")
def published_scores() -> dict:
    return json.loads((Path(__file__).parent / "fixtures" / "published_scores.json").read_text(encoding="utf-8"))
