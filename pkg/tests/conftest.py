import hashlib
import json
import os
from pathlib import Path

import pytest

from normstab.experiments import ResultTable, run_table_experiment

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".acceptance-cache"
_criteria: dict[int, tuple[str, str]] = {}


def _source_digest() -> str:
    h = hashlib.sha256()
    for path in sorted((ROOT / "src" / "normstab").glob("*.py")):
        h.update(path.read_bytes())
    return h.hexdigest()


def cached_table(config) -> ResultTable:
    """Run a table experiment once per (config, source) and reuse it across sessions."""
    key = hashlib.sha256((json.dumps(config.as_dict(), sort_keys=True) + _source_digest()).encode()).hexdigest()[:20]
    path = CACHE / f"{key}.json"
    if path.exists():
        return ResultTable(config, json.loads(path.read_text()))
    table = run_table_experiment(config, write=False)
    CACHE.mkdir(exist_ok=True)
    path.write_text(json.dumps(table.records))
    return table


def workers() -> int:
    return os.cpu_count() or 1


class Checks:
    """Collects the sub-checks of one acceptance criterion."""

    def __init__(self, number: int):
        self.number = number
        self.lines: list[str] = []
        self.failed: list[str] = []

    def __call__(self, label: str, ok: bool, observed) -> None:
        self.lines.append(f"{label}: {observed} [{'ok' if ok else 'FAIL'}]")
        if not ok:
            self.failed.append(label)

    def finish(self) -> None:
        print(f"criterion {self.number}: " + "; ".join(self.lines))
        assert not self.failed, f"criterion {self.number} failed: {self.failed}"


@pytest.fixture
def checks(request):
    marker = request.node.get_closest_marker("criterion")
    c = Checks(marker.args[0])
    request.node.user_properties.append(("checks", c))
    return c


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    detail = ""
    for name, value in item.user_properties:
        if name == "checks":
            detail = "; ".join(value.lines)
    _criteria[marker.args[0]] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
