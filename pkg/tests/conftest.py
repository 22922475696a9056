import json
from pathlib import Path

import pytest

from soliton_forge.pipeline import RunConfig, run

ORACLE = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLE


_RUNS = {}


def cached_run(**kw):
    """Pipeline runs are deterministic, so one run per configuration is shared."""
    key = tuple(sorted(kw.items()))
    if key not in _RUNS:
        _RUNS[key] = run(RunConfig(**kw))
    return _RUNS[key]


@pytest.fixture(scope="session")
def run40():
    return cached_run(d=2, q=-1.0, Lambda=40.0)


@pytest.fixture(scope="session")
def run40_kahler():
    return cached_run(d=2, q=-1.0, Lambda=40.0, pipeline="kahler")


@pytest.fixture(scope="session")
def run_q2_160():
    return cached_run(d=2, q=-2.0, Lambda=160.0)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
