import sys
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
sys.path.insert(0, str(HERE))

# (criterion number, passed, detail) recorded by the acceptance tests;
# a criterion with several entries passes only if all of them do
ACCEPTANCE_LINES = []


def fixture_names():
    return sorted(p.stem for p in FIXTURES.glob("f*_q*.jpg"))


@pytest.fixture(scope="session")
def golden():
    with np.load(FIXTURES / "golden.npz") as g:
        return {k: g[k] for k in g.files}


@pytest.fixture(scope="session")
def fixture_paths():
    return [FIXTURES / f"{n}.jpg" for n in fixture_names()]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    merged = {}
    for n, passed, detail in ACCEPTANCE_LINES:
        ok, parts = merged.get(n, (True, []))
        merged[n] = (ok and passed, parts + [detail])
    for n in sorted(merged):
        ok, parts = merged[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {'; '.join(parts)}")
