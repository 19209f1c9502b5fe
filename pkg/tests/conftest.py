import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> list of (label, passed, detail)
ACCEPTANCE: dict[int, list] = {}
_START = time.perf_counter()
SUITE_BUDGET = 300.0


@pytest.fixture
def record():
    """Record one acceptance line; the summary prints them after the run."""
    def _record(criterion: int, label: str, passed: bool, detail: str = ""):
        ACCEPTANCE.setdefault(criterion, []).append((label, bool(passed), detail))
    return _record


@pytest.fixture(scope="session")
def cp2():
    from chernweil.pipelines import cp2_data
    return cp2_data()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    elapsed = time.perf_counter() - _START
    if 8 in ACCEPTANCE:
        ACCEPTANCE[8].append(("full suite runtime", elapsed < SUITE_BUDGET, f"{elapsed:.0f} s"))
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        rows = ACCEPTANCE[n]
        ok = all(r[1] for r in rows)
        failed = [f"{label}: {detail}" if detail else label for label, good, detail in rows if not good]
        done = "; ".join(f"{label} {detail}".strip() for label, good, detail in rows if good)
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: " + (done if ok else "failed " + "; ".join(failed))
        tr.write_line(line)


@pytest.fixture(scope="session")
def cp2_dirac():
    """``(index, details)`` of the spin Dirac family with CP^2 fibers."""
    from chernweil.index import cp2_fibration, index_spin_dirac
    return index_spin_dirac(cp2_fibration())
