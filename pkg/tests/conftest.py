"""Shared fixtures and the acceptance summary printed at the end of a run."""
import re

import pytest

from entirelab.front import lattice_front, solve_front_bistable
from entirelab.reaction import make_cubic

ACCEPTANCE = {}          # criterion number -> detail string, filled by test_acceptance


@pytest.fixture(scope="session")
def cubic03():
    f = make_cubic(0.3)
    return f, solve_front_bistable(f)


@pytest.fixture(scope="session")
def lattice03(cubic03):
    f, p = cubic03
    return f, lattice_front(f, p, 0.1)


def pytest_terminal_summary(terminalreporter):
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", getattr(rep, "nodeid", ""))
            if m and rep.when in ("call", "setup"):
                n = int(m.group(1))
                if rows.get(n) != "FAIL":
                    rows[n] = "PASS" if outcome == "passed" else "FAIL"
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(rows):
        detail = ACCEPTANCE.get(n, "")
        terminalreporter.write_line(f"criterion {n:2d}: {rows[n]}  {detail}")
