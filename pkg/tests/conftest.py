from __future__ import annotations

import json
import logging
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


# Per-epoch validation on tiny sets logs many zero-division notices.
logging.getLogger("learnerq.analysis.metrics").setLevel(logging.ERROR)


@pytest.fixture(autouse=True)
def _restore_root_logger():
    # cli.main reconfigures the root logger; undo that between tests.
    root = logging.getLogger()
    level, handlers = root.level, list(root.handlers)
    yield
    root.setLevel(level)
    root.handlers[:] = handlers


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_expected() -> dict:
    return json.loads((FIXTURES / "corpus_expected.json").read_text(encoding="utf-8"))


@pytest.fixture
def fixture_corpus():
    from learnerq.corpus import Corpus

    return Corpus.load(FIXTURES / "corpus")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    name = item.name
    if report.when == "call" and report.failed and name.startswith("test_criterion_"):
        from test_acceptance import RESULTS

        n = int(name.split("_")[2])
        RESULTS.setdefault(n, (False, f"error: {call.excinfo.typename}: {str(call.excinfo.value)[:120]}"))
